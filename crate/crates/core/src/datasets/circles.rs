use super::{DatasetError, DatasetKind, Instance};

pub const CIRCLES_RESOLUTION: usize = 64;
const MAX_RADIUS: f64 = 31.0;

/// Practice dataset: a centered disc of radius `z1 · 31` px with intensity `z2`
/// on a background of `1 − z2`.
pub fn circles_decode(z: &[f64]) -> Result<Instance, DatasetError> {
    if z.len() != 2 {
        return Err(DatasetError::Domain(format!(
            "circles needs 2 factors, got {}",
            z.len()
        )));
    }
    if z.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(DatasetError::Domain(format!(
            "circles factors must lie in [0, 1], got {z:?}"
        )));
    }
    let radius = z[0] * MAX_RADIUS;
    let fg = z[1] as f32;
    let bg = (1.0 - z[1]) as f32;
    let mid = (CIRCLES_RESOLUTION as f64 - 1.0) / 2.0;
    let mut data = vec![bg; CIRCLES_RESOLUTION * CIRCLES_RESOLUTION];
    for row in 0..CIRCLES_RESOLUTION {
        for col in 0..CIRCLES_RESOLUTION {
            let (dx, dy) = (col as f64 - mid, row as f64 - mid);
            if dx * dx + dy * dy < radius * radius {
                data[row * CIRCLES_RESOLUTION + col] = fg;
            }
        }
    }
    Ok(Instance::from_trusted(DatasetKind::Circles, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_disc_is_white() {
        let x = circles_decode(&[0.0, 0.0]).unwrap();
        assert!(x.data.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn full_disc_on_black() {
        let x = circles_decode(&[1.0, 1.0]).unwrap();
        let center = 31 * 64 + 31;
        assert_eq!(x.data[center], 1.0);
        assert_eq!(x.data[0], 0.0);
        let lit = x.data.iter().filter(|&&p| p == 1.0).count() as f64;
        let area = std::f64::consts::PI * 31.0 * 31.0;
        assert!((lit - area).abs() / area < 0.05);
    }

    #[test]
    fn equal_intensities_are_uniform() {
        let x = circles_decode(&[0.5, 0.5]).unwrap();
        assert!(x.data.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn out_of_range_is_domain_error() {
        assert!(circles_decode(&[1.2, 0.5]).is_err());
        assert!(circles_decode(&[0.2, -0.1]).is_err());
        assert!(circles_decode(&[0.2]).is_err());
    }
}
