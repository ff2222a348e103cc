//! Small moment helpers over paired samples.

pub(crate) fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    if n == 0 { 0.0 } else { s / n as f64 }
}

/// Pooled second moments of `(y, x)` pairs over several quadrature blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub n: usize,
    pub var_x: f64,
    pub var_y: f64,
    pub cov: f64,
}

/// Sample (co)variances with divisor `n - 1`, each block centered on its
/// own mean, then pooled.
pub(crate) fn pooled<'a>(blocks: impl IntoIterator<Item = (&'a [f64], &'a [f64])>) -> Moments {
    let mut m = Moments::default();
    let mut dof = 0usize;
    for (y, x) in blocks {
        debug_assert_eq!(y.len(), x.len());
        let n = y.len();
        if n < 2 {
            continue;
        }
        let my = mean(y.iter().copied());
        let mx = mean(x.iter().copied());
        for (a, b) in y.iter().zip(x) {
            let (dy, dx) = (a - my, b - mx);
            m.var_y += dy * dy;
            m.var_x += dx * dx;
            m.cov += dy * dx;
        }
        m.n += n;
        dof += n - 1;
    }
    if dof > 0 {
        let d = dof as f64;
        m.var_x /= d;
        m.var_y /= d;
        m.cov /= d;
    }
    m
}
