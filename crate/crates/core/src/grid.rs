//! The discrete (cell, month) lattice.
//!
//! Cells are equal-degree rectangles over configurable geographic bounds.
//! `x` grows eastward with longitude and `y` grows northward with latitude.
//! Months are counted from January 1985.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EPOCH_YEAR: i32 = 1985;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBounds {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl GeoBounds {
    pub fn new(lon_min: f64, lon_max: f64, lat_min: f64, lat_max: f64) -> Result<Self> {
        let b = GeoBounds {
            lon_min,
            lon_max,
            lat_min,
            lat_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lon_min, self.lon_max, self.lat_min, self.lat_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("grid bounds must be finite".into()));
        }
        if self.lon_min >= self.lon_max {
            return Err(Error::Config(format!(
                "lon_min ({}) must be below lon_max ({})",
                self.lon_min, self.lon_max
            )));
        }
        if self.lat_min >= self.lat_max {
            return Err(Error::Config(format!(
                "lat_min ({}) must be below lat_max ({})",
                self.lat_min, self.lat_max
            )));
        }
        Ok(())
    }
}

impl Default for GeoBounds {
    /// North Africa through West India.
    fn default() -> Self {
        GeoBounds {
            lon_min: -20.0,
            lon_max: 80.0,
            lat_min: -10.0,
            lat_max: 45.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: GeoBounds,
    pub n_x: usize,
    pub n_y: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            bounds: GeoBounds::default(),
            n_x: 100,
            n_y: 100,
        }
    }
}

impl GridSpec {
    pub fn new(bounds: GeoBounds, n_x: usize, n_y: usize) -> Result<Self> {
        let spec = GridSpec { bounds, n_x, n_y };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.n_x == 0 || self.n_y == 0 {
            return Err(Error::Config(format!(
                "grid resolution must be positive, got {}x{}",
                self.n_x, self.n_y
            )));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        cell.x < self.n_x && cell.y < self.n_y
    }

    /// Geographic centre of a cell.
    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        let b = &self.bounds;
        let dx = (b.lon_max - b.lon_min) / self.n_x as f64;
        let dy = (b.lat_max - b.lat_min) / self.n_y as f64;
        (
            b.lon_min + (cell.x as f64 + 0.5) * dx,
            b.lat_min + (cell.y as f64 + 0.5) * dy,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub x: usize,
    pub y: usize,
}

impl CellIndex {
    pub fn new(x: usize, y: usize) -> Self {
        CellIndex { x, y }
    }

    pub fn chebyshev(&self, other: &CellIndex) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Months elapsed since January 1985.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MonthIndex(pub u32);

impl MonthIndex {
    pub fn value(self) -> u32 {
        self.0
    }

    pub fn year_month(self) -> (i32, u32) {
        (EPOCH_YEAR + (self.0 / 12) as i32, self.0 % 12 + 1)
    }

    /// Zero-based month of year, January = 0.
    pub fn month_of_year(self) -> u32 {
        self.0 % 12
    }

    pub fn checked_sub(self, months: u32) -> Option<MonthIndex> {
        self.0.checked_sub(months).map(MonthIndex)
    }

    /// `yyyymm`, as used in report filenames.
    pub fn yyyymm(self) -> String {
        let (y, m) = self.year_month();
        format!("{y:04}{m:02}")
    }
}

impl fmt::Display for MonthIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (y, m) = self.year_month();
        write!(f, "{y:04}-{m:02}")
    }
}

fn axis_position(value: f64, min: f64, max: f64, n: usize, axis: &'static str) -> Result<usize> {
    if !(value >= min && value <= max) {
        return Err(Error::OutOfBounds {
            axis,
            value,
            min,
            max,
        });
    }
    let scaled = ((value - min) / (max - min) * n as f64).floor();
    Ok((scaled as usize).min(n - 1))
}

/// Cell containing a coordinate. Points on the maximal bound land in the last
/// cell along that axis.
pub fn locate_cell(lon: f64, lat: f64, spec: &GridSpec) -> Result<CellIndex> {
    let b = &spec.bounds;
    let x = axis_position(lon, b.lon_min, b.lon_max, spec.n_x, "longitude")?;
    let y = axis_position(lat, b.lat_min, b.lat_max, spec.n_y, "latitude")?;
    Ok(CellIndex { x, y })
}

pub fn month_index(year: i32, month: u32) -> Result<MonthIndex> {
    if !(1..=12).contains(&month) {
        return Err(Error::InvalidMonth(month));
    }
    if year < EPOCH_YEAR {
        return Err(Error::BeforeEpoch { year, month });
    }
    Ok(MonthIndex((year - EPOCH_YEAR) as u32 * 12 + (month - 1)))
}

pub fn check_kernel(k: usize) -> Result<usize> {
    if k.is_multiple_of(2) {
        return Err(Error::InvalidKernel(k));
    }
    Ok(k / 2)
}

/// In-grid cells within Chebyshev radius `(k - 1) / 2` of `center`, clipped at
/// the grid edges. Ordered by `y`, then `x`.
pub fn kernel_cells(center: CellIndex, k: usize, spec: &GridSpec) -> Result<Vec<CellIndex>> {
    let r = check_kernel(k)?;
    let x0 = center.x.saturating_sub(r);
    let x1 = (center.x + r).min(spec.n_x - 1);
    let y0 = center.y.saturating_sub(r);
    let y1 = (center.y + r).min(spec.n_y - 1);
    let mut out = Vec::with_capacity((x1 + 1 - x0) * (y1 + 1 - y0));
    for y in y0..=y1 {
        for x in x0..=x1 {
            out.push(CellIndex { x, y });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(max: f64, n: usize) -> GridSpec {
        GridSpec::new(GeoBounds::new(0.0, max, 0.0, max).unwrap(), n, n).unwrap()
    }

    #[test]
    fn locate_unit_cells() {
        let spec = square(100.0, 100);
        assert_eq!(
            locate_cell(12.3, 45.6, &spec).unwrap(),
            CellIndex::new(12, 45)
        );
    }

    #[test]
    fn locate_clamps_max_bound() {
        let spec = square(100.0, 100);
        assert_eq!(
            locate_cell(100.0, 0.0, &spec).unwrap(),
            CellIndex::new(99, 0)
        );
    }

    #[test]
    fn locate_coarse_grid() {
        let spec = square(10.0, 4);
        assert_eq!(locate_cell(7.5, 2.5, &spec).unwrap(), CellIndex::new(3, 1));
    }

    #[test]
    fn locate_rejects_out_of_bounds() {
        let spec = square(10.0, 4);
        match locate_cell(5.0, 10.5, &spec) {
            Err(Error::OutOfBounds { axis, value, .. }) => {
                assert_eq!(axis, "latitude");
                assert_eq!(value, 10.5);
            }
            other => panic!("expected out-of-bounds, got {other:?}"),
        }
        assert!(locate_cell(-0.1, 5.0, &spec).is_err());
        assert!(locate_cell(f64::NAN, 5.0, &spec).is_err());
    }

    #[test]
    fn month_index_values() {
        assert_eq!(month_index(1985, 1).unwrap(), MonthIndex(0));
        assert_eq!(month_index(2017, 5).unwrap(), MonthIndex(388));
        assert_eq!(month_index(2019, 7).unwrap(), MonthIndex(414));
        assert!(matches!(
            month_index(1984, 12),
            Err(Error::BeforeEpoch { .. })
        ));
        assert!(matches!(
            month_index(2000, 13),
            Err(Error::InvalidMonth(13))
        ));
    }

    #[test]
    fn kernel_sizes() {
        let spec = GridSpec::default();
        assert_eq!(
            kernel_cells(CellIndex::new(2, 2), 3, &spec).unwrap().len(),
            9
        );
        assert_eq!(
            kernel_cells(CellIndex::new(0, 0), 3, &spec).unwrap().len(),
            4
        );
        assert_eq!(
            kernel_cells(CellIndex::new(0, 5), 5, &spec).unwrap().len(),
            15
        );
        assert_eq!(
            kernel_cells(CellIndex::new(7, 7), 1, &spec).unwrap(),
            vec![CellIndex::new(7, 7)]
        );
        assert!(matches!(
            kernel_cells(CellIndex::new(0, 0), 2, &spec),
            Err(Error::InvalidKernel(2))
        ));
        assert!(kernel_cells(CellIndex::new(0, 0), 0, &spec).is_err());
    }

    #[test]
    fn bounds_validation() {
        assert!(GeoBounds::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(GeoBounds::new(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(GridSpec::new(GeoBounds::default(), 0, 10).is_err());
    }

    proptest! {
        #[test]
        fn located_point_lies_inside_its_cell(lon in -20.0f64..=80.0, lat in -10.0f64..=45.0) {
            let spec = GridSpec::default();
            let c = locate_cell(lon, lat, &spec).unwrap();
            prop_assert!(spec.contains(c));
            let dx = 100.0 / 100.0;
            let dy = 55.0 / 100.0;
            let lo_x = -20.0 + c.x as f64 * dx;
            let lo_y = -10.0 + c.y as f64 * dy;
            prop_assert!(lon >= lo_x - 1e-9 && lon <= lo_x + dx + 1e-9);
            prop_assert!(lat >= lo_y - 1e-9 && lat <= lo_y + dy + 1e-9);
        }

        #[test]
        fn month_index_round_trips(year in 1985i32..2200, month in 1u32..=12) {
            let m = month_index(year, month).unwrap();
            prop_assert_eq!(m.year_month(), (year, month));
            if month < 12 {
                prop_assert!(month_index(year, month + 1).unwrap() > m);
            }
            prop_assert!(month_index(year + 1, 1).unwrap() > m);
        }

        #[test]
        fn kernel_matches_window_enumeration(
            n_x in 1usize..20, n_y in 1usize..20, cx in 0usize..20, cy in 0usize..20, half in 0usize..3
        ) {
            let spec = GridSpec::new(GeoBounds::default(), n_x, n_y).unwrap();
            let center = CellIndex::new(cx % n_x, cy % n_y);
            let k = 2 * half + 1;
            let got = kernel_cells(center, k, &spec).unwrap();
            let mut expected = Vec::new();
            for y in 0..n_y {
                for x in 0..n_x {
                    let c = CellIndex::new(x, y);
                    if c.chebyshev(&center) <= half {
                        expected.push(c);
                    }
                }
            }
            prop_assert_eq!(got, expected);
        }
    }
}
