use super::{FixedLoadParams, FEAS_TOL};

pub fn cost(l: &FixedLoadParams, p: &[f64]) -> f64 {
    if p.iter()
        .zip(&l.p_load)
        .all(|(a, b)| (a - b).abs() <= FEAS_TOL)
    {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Projection onto the single feasible schedule.
pub fn prox(l: &FixedLoadParams, p: &mut [f64]) {
    p.copy_from_slice(&l.p_load);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator() {
        let l = FixedLoadParams {
            p_load: vec![-2.0, -3.0],
        };
        assert_eq!(cost(&l, &[-2.0, -3.0]), 0.0);
        assert_eq!(cost(&l, &[-2.0, -2.0]), f64::INFINITY);
        let mut p = [9.0, 9.0];
        prox(&l, &mut p);
        assert_eq!(p, [-2.0, -3.0]);
    }
}
