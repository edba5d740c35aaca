//! Central finite-difference gradient checking.
//!
//! The numeric side only re-evaluates the forward closure, so it stays
//! independent of the tape's backward rules.

/// Relative error with an absolute floor: tiny gradients below the floor
/// are compared absolutely (central differences cannot resolve them at
/// double precision).
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < 1e-7 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(1e-12)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Check `analytic` against central differences of `f` at the listed
/// coordinates of `x` (all coordinates when `coords` is empty).
pub fn check_grad(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    step: f64,
    coords: &[usize],
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len());
    let all: Vec<usize>;
    let coords = if coords.is_empty() {
        all = (0..x.len()).collect();
        &all
    } else {
        coords
    };
    let mut buf = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_coord: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: coords.len(),
    };
    for &i in coords {
        let orig = buf[i];
        buf[i] = orig + step;
        let fp = f(&buf);
        buf[i] = orig - step;
        let fm = f(&buf);
        buf[i] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        let e = rel_err(analytic[i], numeric);
        if e > report.max_rel_err {
            report.max_rel_err = e;
            report.worst_coord = i;
            report.analytic_at_worst = analytic[i];
            report.numeric_at_worst = numeric;
        }
    }
    report
}
