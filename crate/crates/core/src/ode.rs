//! Classical fourth-order Runge-Kutta with a fixed step.

use nalgebra::DVector;

/// One step of size `h` from `(t, y)`.
pub fn rk4_step<F>(f: &mut F, t: f64, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let half = 0.5 * h;
    let k1 = f(t, y);
    let k2 = f(t + half, &(y + &k1 * half));
    let k3 = f(t + half, &(y + &k2 * half));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// Number of whole steps of size `h` covering `[0, t_end]`, or `None` if
/// `t_end / h` is not an integer to within `1e-9`.
pub fn step_count(t_end: f64, h: f64) -> Option<usize> {
    if !(t_end > 0.0 && h > 0.0 && t_end.is_finite() && h.is_finite()) {
        return None;
    }
    let ratio = t_end / h;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || !(1.0..=1e9).contains(&steps) {
        return None;
    }
    Some(steps as usize)
}

/// Integrates over `steps` steps and returns the states on the grid
/// `t_i = t0 + i h`, including the initial state.
pub fn rk4_solve<F>(mut f: F, t0: f64, y0: DVector<f64>, h: f64, steps: usize) -> Vec<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0);
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        let next = rk4_step(&mut f, t, &out[i], h);
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_cubic_in_time() {
        // y' = 3 t^2 has y = t^3 and RK4 integrates it exactly
        let ys = rk4_solve(
            |t, _| DVector::from_element(1, 3.0 * t * t),
            0.0,
            DVector::zeros(1),
            0.1,
            20,
        );
        assert!((ys[20][0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn fourth_order_on_exponential() {
        let err = |h: f64| {
            let steps = (1.0 / h).round() as usize;
            let ys = rk4_solve(
                |_, y| y.clone(),
                0.0,
                DVector::from_element(1, 1.0),
                h,
                steps,
            );
            (ys[steps][0] - 1f64.exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 15.0 && ratio < 17.0, "ratio {ratio}");
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(60.0, 1e-3), Some(60000));
        assert_eq!(step_count(1.0, 0.3), None);
        assert_eq!(step_count(0.0, 0.1), None);
        assert_eq!(step_count(1.0, -0.1), None);
    }
}
