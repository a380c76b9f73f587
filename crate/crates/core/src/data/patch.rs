use crate::data::{HsiCube, LabelMap};
use crate::error::{Error, Result};

/// A square spatial window of the cube around a labeled center pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub center: (usize, usize),
    pub size: usize,
    pub bands: usize,
    /// `size x size x bands`, row-major with bands fastest.
    pub data: Vec<f32>,
    pub label: u32,
}

impl Patch {
    pub fn pixel(&self, i: usize, j: usize) -> &[f32] {
        let start = (i * self.size + j) * self.bands;
        &self.data[start..start + self.bands]
    }
}

/// Reflects an out-of-range index back into `0..n` without repeating the
/// edge sample (`-1 -> 1`, `n -> n - 2`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut k = i.rem_euclid(period);
    if k >= n as isize {
        k = period - k;
    }
    k as usize
}

/// Source pixel for every cell of a `size x size` window centered at
/// `center`, in row-major order, mirror-padded at the borders.
pub fn patch_coords(
    height: usize,
    width: usize,
    center: (usize, usize),
    size: usize,
) -> Result<Vec<(usize, usize)>> {
    if size.is_multiple_of(2) || size == 0 {
        return Err(Error::InvalidArgument(format!(
            "patch size must be odd, got {size}"
        )));
    }
    let (r0, c0) = center;
    if r0 >= height || c0 >= width {
        return Err(Error::InvalidArgument(format!(
            "center ({r0}, {c0}) outside {height}x{width} image"
        )));
    }
    let half = (size / 2) as isize;
    let mut coords = Vec::with_capacity(size * size);
    for dr in -half..=half {
        for dc in -half..=half {
            coords.push((
                reflect_index(r0 as isize + dr, height),
                reflect_index(c0 as isize + dc, width),
            ));
        }
    }
    Ok(coords)
}

pub fn extract_patch(
    cube: &HsiCube,
    labels: &LabelMap,
    center: (usize, usize),
    size: usize,
) -> Result<Patch> {
    if labels.height() != cube.height() || labels.width() != cube.width() {
        return Err(Error::Shape("label map and cube dimensions differ".into()));
    }
    let coords = patch_coords(cube.height(), cube.width(), center, size)?;
    let data = coords
        .iter()
        .flat_map(|&(r, c)| cube.pixel(r, c).iter().copied())
        .collect();
    Ok(Patch {
        center,
        size,
        bands: cube.bands(),
        data,
        label: labels.get(center.0, center.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize) -> (HsiCube, LabelMap) {
        let data: Vec<f32> = (0..h * w).map(|i| i as f32).collect();
        let labels: Vec<u32> = (0..h * w).map(|i| (i % 3) as u32 + 1).collect();
        (
            HsiCube::new(h, w, vec![500.0], data).unwrap(),
            LabelMap::new(h, w, labels).unwrap(),
        )
    }

    #[test]
    fn interior_patch_has_no_padding() {
        let (cube, labels) = grid(10, 10);
        let p = extract_patch(&cube, &labels, (4, 6), 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(p.pixel(i, j)[0], ((2 + i) * 10 + 4 + j) as f32);
            }
        }
        assert_eq!(p.label, labels.get(4, 6));
    }

    #[test]
    fn corner_patch_mirrors() {
        // 3x3 grid values:
        // 0 1 2
        // 3 4 5
        // 6 7 8
        let (cube, labels) = grid(3, 3);
        let p = extract_patch(&cube, &labels, (0, 0), 3).unwrap();
        let got: Vec<f32> = p.data.clone();
        assert_eq!(got, vec![4.0, 3.0, 4.0, 1.0, 0.0, 1.0, 4.0, 3.0, 4.0]);
    }

    #[test]
    fn even_size_rejected() {
        let (cube, labels) = grid(4, 4);
        assert!(extract_patch(&cube, &labels, (1, 1), 4).is_err());
    }

    #[test]
    fn out_of_bounds_center_rejected() {
        let (cube, labels) = grid(4, 4);
        assert!(extract_patch(&cube, &labels, (4, 0), 3).is_err());
    }

    #[test]
    fn reflect_handles_wide_windows() {
        assert_eq!(reflect_index(-1, 3), 1);
        assert_eq!(reflect_index(-3, 3), 1);
        assert_eq!(reflect_index(3, 3), 1);
        assert_eq!(reflect_index(4, 3), 0);
        assert_eq!(reflect_index(-2, 1), 0);
    }

    #[test]
    fn labels_follow_center() {
        let (cube, labels) = grid(6, 5);
        for r in 0..6 {
            for c in 0..5 {
                let p = extract_patch(&cube, &labels, (r, c), 5).unwrap();
                assert_eq!(p.label, labels.get(r, c));
            }
        }
    }
}
