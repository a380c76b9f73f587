//! Spectral band-slice segmentation.
//!
//! Slices are half-open wavelength intervals `[lower, upper)`; an absent
//! bound is unbounded. The default set splits the spectrum into seven
//! physiologically meaningful regions (blue through NIR).

use serde::{Deserialize, Serialize};

use crate::data::HsiCube;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSlice {
    pub name: String,
    pub lower_nm: Option<f64>,
    pub upper_nm: Option<f64>,
}

impl BandSlice {
    pub fn new(name: &str, lower_nm: Option<f64>, upper_nm: Option<f64>) -> Self {
        Self {
            name: name.to_string(),
            lower_nm,
            upper_nm,
        }
    }

    pub fn contains(&self, wavelength: f64) -> bool {
        self.lower_nm.is_none_or(|lo| wavelength >= lo)
            && self.upper_nm.is_none_or(|hi| wavelength < hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSliceSet {
    pub slices: Vec<BandSlice>,
    /// Cube band indices per slice; empty until [`segment_bands`] runs.
    pub band_index_ranges: Vec<Vec<usize>>,
}

impl Default for BandSliceSet {
    fn default() -> Self {
        Self::from_slices(vec![
            BandSlice::new("blue", None, Some(515.0)),
            BandSlice::new("green", Some(515.0), Some(600.0)),
            BandSlice::new("red", Some(600.0), Some(680.0)),
            BandSlice::new("red_edge1", Some(680.0), Some(710.0)),
            BandSlice::new("red_edge2", Some(710.0), Some(750.0)),
            BandSlice::new("red_edge3", Some(750.0), Some(790.0)),
            BandSlice::new("nir", Some(790.0), None),
        ])
        .expect("default slices are ordered")
    }
}

impl BandSliceSet {
    pub fn from_slices(slices: Vec<BandSlice>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::InvalidArgument("slice set is empty".into()));
        }
        for s in &slices {
            if let (Some(lo), Some(hi)) = (s.lower_nm, s.upper_nm) {
                if lo >= hi {
                    return Err(Error::InvalidArgument(format!(
                        "slice {} has empty interval [{lo}, {hi})",
                        s.name
                    )));
                }
            }
        }
        for pair in slices.windows(2) {
            let ordered = match (pair[0].upper_nm, pair[1].lower_nm) {
                (Some(hi), Some(lo)) => hi <= lo,
                _ => false,
            };
            if !ordered {
                return Err(Error::InvalidArgument(format!(
                    "slices {} and {} overlap or are out of order",
                    pair[0].name, pair[1].name
                )));
            }
        }
        let n = slices.len();
        Ok(Self {
            slices,
            band_index_ranges: vec![Vec::new(); n],
        })
    }

    /// One slice covering every band (segmentation disabled).
    pub fn whole_spectrum() -> Self {
        Self::from_slices(vec![BandSlice::new("full", None, None)]).expect("single slice")
    }

    /// Assigns each wavelength to the slice containing it.
    pub fn segment(&self, wavelengths: &[f64]) -> Result<Self> {
        let mut ranges = vec![Vec::new(); self.slices.len()];
        for (band, &wl) in wavelengths.iter().enumerate() {
            if let Some(i) = self.slices.iter().position(|s| s.contains(wl)) {
                ranges[i].push(band);
            }
        }
        if ranges.iter().all(Vec::is_empty) {
            return Err(Error::NoBandOverlap);
        }
        Ok(Self {
            slices: self.slices.clone(),
            band_index_ranges: ranges,
        })
    }

    pub fn is_empty_slice(&self, i: usize) -> bool {
        self.band_index_ranges[i].is_empty()
    }

    /// Indices of slices that received at least one band.
    pub fn non_empty(&self) -> Vec<usize> {
        (0..self.slices.len())
            .filter(|&i| !self.is_empty_slice(i))
            .collect()
    }
}

pub fn segment_bands(cube: &HsiCube, spec: &BandSliceSet) -> Result<BandSliceSet> {
    spec.segment(cube.wavelengths())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_assignment_against_defaults() {
        let s = BandSliceSet::default()
            .segment(&[480.0, 550.0, 700.0, 900.0])
            .unwrap();
        let expect: Vec<Vec<usize>> = vec![
            vec![0],
            vec![1],
            vec![],
            vec![2],
            vec![],
            vec![],
            vec![3],
        ];
        assert_eq!(s.band_index_ranges, expect);
        assert_eq!(s.non_empty(), vec![0, 1, 3, 6]);
    }

    #[test]
    fn lower_bound_inclusive() {
        let s = BandSliceSet::default().segment(&[515.0]).unwrap();
        assert_eq!(s.band_index_ranges[1], vec![0]);
    }

    #[test]
    fn no_overlap_is_error() {
        let spec = BandSliceSet::from_slices(vec![BandSlice::new(
            "green",
            Some(515.0),
            Some(600.0),
        )])
        .unwrap();
        let err = spec.segment(&[400.0, 900.0]).unwrap_err();
        assert_eq!(err.to_string(), "no band falls inside any slice");
    }

    #[test]
    fn overlapping_slices_rejected() {
        let r = BandSliceSet::from_slices(vec![
            BandSlice::new("a", None, Some(600.0)),
            BandSlice::new("b", Some(550.0), None),
        ]);
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn defaults_partition_every_band(mut wl in prop::collection::vec(350.0f64..2600.0, 1..60)) {
            wl.sort_by(f64::total_cmp);
            wl.dedup();
            let s = BandSliceSet::default().segment(&wl).unwrap();
            let mut seen = vec![0usize; wl.len()];
            for (i, r) in s.band_index_ranges.iter().enumerate() {
                for &b in r {
                    seen[b] += 1;
                    prop_assert!(s.slices[i].contains(wl[b]));
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
