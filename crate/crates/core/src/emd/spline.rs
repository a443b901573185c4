//! Natural cubic spline used for the extrema envelopes.

/// Natural cubic spline through `(xs[i], ys[i])`, `xs` strictly increasing.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    /// Needs at least two knots; two knots give a straight line.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Option<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n || xs.windows(2).any(|w| w[1] <= w[0]) {
            return None;
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations
            //   h[i-1] m[i-1] + 2 (h[i-1] + h[i]) m[i] + h[i] m[i+1] = 6 (d[i] - d[i-1])
            let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
            let d: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for j in 0..k {
                let i = j + 1;
                diag[j] = 2.0 * (h[i - 1] + h[i]);
                rhs[j] = 6.0 * (d[i] - d[i - 1]);
            }
            for j in 1..k {
                let w = h[j] / diag[j - 1];
                diag[j] -= w * h[j];
                rhs[j] -= w * rhs[j - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for j in (0..k - 1).rev() {
                m[j + 1] = (rhs[j] - h[j + 1] * m[j + 2]) / diag[j];
            }
        }
        Some(Self { xs, ys, m })
    }

    fn eval_segment(&self, i: usize, x: f64) -> f64 {
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        let last = self.xs.len() - 2;
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p => (p - 1).min(last),
        };
        self.eval_segment(i, x)
    }

    /// Evaluates at `0, 1, ..., n - 1`.
    pub fn sample_grid(&self, n: usize) -> Vec<f64> {
        let last = self.xs.len() - 2;
        let mut seg = 0;
        (0..n)
            .map(|t| {
                let x = t as f64;
                while seg < last && self.xs[seg + 1] <= x {
                    seg += 1;
                }
                self.eval_segment(seg, x)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots_and_reproduces_lines() {
        let xs = vec![-2.0, 0.0, 1.5, 4.0, 7.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let s = NaturalSpline::new(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((s.eval(*x) - y).abs() < 1e-12);
        }
        for t in 0..7 {
            assert!((s.eval(t as f64) - (3.0 * t as f64 - 1.0)).abs() < 1e-12);
        }
        let grid = s.sample_grid(7);
        assert!((grid[6] - 17.0).abs() < 1e-12);
    }

    #[test]
    fn natural_end_conditions() {
        let s = NaturalSpline::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.m[0], 0.0);
        assert_eq!(s.m[3], 0.0);
        // 4 m1 + m2 = -12, m1 + 4 m2 = 12
        assert!((s.m[1] + 4.0).abs() < 1e-12 && (s.m[2] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_function_is_approximated() {
        let xs: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let s = NaturalSpline::new(xs, ys).unwrap();
        for i in 10..30 {
            let x = i as f64 * 0.25 + 0.1;
            assert!((s.eval(x) - x.sin()).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(NaturalSpline::new(vec![0.0], vec![1.0]).is_none());
        assert!(NaturalSpline::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_none());
    }
}
