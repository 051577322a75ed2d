//! Raw observation parsing and per-(cell, month) aggregation.
//!
//! Feature layout (schema version 1):
//!
//! | dims   | content                                                     |
//! |--------|-------------------------------------------------------------|
//! | 0..=3  | record counts for hopper, band, adult, swarm                |
//! | 4      | swarm count summed over the K×K kernel around the cell      |
//! | 5..=8  | modal vegetation one-hot (unknown, dry, greening, green)    |
//! | 9..=11 | modal soil-moisture one-hot (unknown, dry, wet)             |
//! | 12, 13 | sin and cos of 2π·(month of year)/12, January = 0           |
//! | 14     | observation presence flag                                   |

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_kernel, locate_cell, month_index, CellIndex, GridSpec, MonthIndex};

pub const FEATURE_DIM: usize = 15;
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

pub const DIM_SWARM: usize = 3;
pub const DIM_SWARM_KERNEL: usize = 4;
pub const DIM_VEGETATION: usize = 5;
pub const DIM_SOIL: usize = 9;
pub const DIM_SEASON_SIN: usize = 12;
pub const DIM_SEASON_COS: usize = 13;
pub const DIM_PRESENCE: usize = 14;
/// Dimensions holding counts; everything from here up is one-hot, seasonal or a flag.
pub const CONTINUOUS_DIMS: usize = 5;

pub type FeatureVector = [f64; FEATURE_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocustCategory {
    Hopper,
    Band,
    Adult,
    Swarm,
}

impl LocustCategory {
    pub const ALL: [LocustCategory; 4] = [
        LocustCategory::Hopper,
        LocustCategory::Band,
        LocustCategory::Adult,
        LocustCategory::Swarm,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            LocustCategory::Hopper => "hopper",
            LocustCategory::Band => "band",
            LocustCategory::Adult => "adult",
            LocustCategory::Swarm => "swarm",
        }
    }
}

impl fmt::Display for LocustCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub enum Vegetation {
    #[default]
    Unknown,
    Dry,
    Greening,
    Green,
}

impl Vegetation {
    pub const ALL: [Vegetation; 4] = [
        Vegetation::Unknown,
        Vegetation::Dry,
        Vegetation::Greening,
        Vegetation::Green,
    ];

    pub fn parse(raw: &str) -> Self {
        match raw.trim().to_ascii_lowercase().as_str() {
            "dry" | "dead" => Vegetation::Dry,
            "greening" | "greening up" => Vegetation::Greening,
            "green" => Vegetation::Green,
            _ => Vegetation::Unknown,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Vegetation::Unknown => "",
            Vegetation::Dry => "Dry",
            Vegetation::Greening => "Greening",
            Vegetation::Green => "Green",
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub enum SoilMoisture {
    #[default]
    Unknown,
    Dry,
    Wet,
}

impl SoilMoisture {
    pub const ALL: [SoilMoisture; 3] =
        [SoilMoisture::Unknown, SoilMoisture::Dry, SoilMoisture::Wet];

    pub fn parse(raw: &str) -> Self {
        match raw.trim().to_ascii_lowercase().as_str() {
            "dry" => SoilMoisture::Dry,
            "wet" | "moist" | "humid" => SoilMoisture::Wet,
            _ => SoilMoisture::Unknown,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SoilMoisture::Unknown => "",
            SoilMoisture::Dry => "Dry",
            SoilMoisture::Wet => "Wet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EcologyAttrs {
    pub vegetation: Vegetation,
    pub soil_moisture: SoilMoisture,
}

/// Case-insensitive label lists for each locust category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySynonyms {
    pub hopper: Vec<String>,
    pub band: Vec<String>,
    pub adult: Vec<String>,
    pub swarm: Vec<String>,
}

impl Default for CategorySynonyms {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        CategorySynonyms {
            hopper: v(&["hopper", "hoppers", "solitarious hopper", "nymph"]),
            band: v(&["band", "bands", "hopper band", "hopper bands"]),
            adult: v(&["adult", "adults", "solitarious adult"]),
            swarm: v(&["swarm", "swarms"]),
        }
    }
}

pub fn classify_category(raw: &str, synonyms: &CategorySynonyms) -> Result<LocustCategory> {
    let label = raw.trim();
    let lists = [
        (LocustCategory::Hopper, &synonyms.hopper),
        (LocustCategory::Band, &synonyms.band),
        (LocustCategory::Adult, &synonyms.adult),
        (LocustCategory::Swarm, &synonyms.swarm),
    ];
    lists
        .iter()
        .find(|(_, names)| names.iter().any(|n| n.trim().eq_ignore_ascii_case(label)))
        .map(|(cat, _)| *cat)
        .ok_or_else(|| Error::UnknownCategory(raw.to_string()))
}

/// Which CSV header names carry each field. An empty ecology column name
/// means the attribute is absent from the export and reads as unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub lon: String,
    pub lat: String,
    pub date: String,
    pub category: String,
    pub vegetation: String,
    pub soil_moisture: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            lon: "X".into(),
            lat: "Y".into(),
            date: "STARTDATE".into(),
            category: "LOCUSTTYPE".into(),
            vegetation: "VEGSTATE".into(),
            soil_moisture: "SOILMOIST".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub lon: f64,
    pub lat: f64,
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub category: LocustCategory,
    pub ecology: EcologyAttrs,
    pub source_line: u64,
}

impl ObservationRecord {
    pub fn month_index(&self) -> Result<MonthIndex> {
        month_index(self.year, self.month)
    }
}

/// A row that could not become a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: u64,
    pub reason: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

/// Accepts ISO `yyyy-mm-dd` or `yyyy/mm/dd`, optionally followed by a time.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let head = raw.trim().split([' ', 'T']).next()?;
    NaiveDate::parse_from_str(head, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(head, "%Y/%m/%d"))
        .ok()
}

struct ColumnPositions {
    lon: usize,
    lat: usize,
    date: usize,
    category: usize,
    vegetation: Option<usize>,
    soil_moisture: Option<usize>,
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn find_optional(headers: &csv::StringRecord, name: &str) -> Result<Option<usize>> {
    if name.is_empty() {
        Ok(None)
    } else {
        find_column(headers, name).map(Some)
    }
}

fn parse_row(
    row: &csv::StringRecord,
    cols: &ColumnPositions,
    synonyms: &CategorySynonyms,
    line: u64,
) -> std::result::Result<ObservationRecord, String> {
    let field = |i: usize| row.get(i).unwrap_or("").trim();
    let coord = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let raw = field(i);
        if raw.is_empty() {
            return Err(format!("empty {name} field"));
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("unparseable {name} {raw:?}")),
        }
    };
    let lon = coord(cols.lon, "longitude")?;
    let lat = coord(cols.lat, "latitude")?;
    let raw_date = field(cols.date);
    let date = parse_date(raw_date).ok_or_else(|| format!("malformed date {raw_date:?}"))?;
    if month_index(date.year(), date.month()).is_err() {
        return Err(format!("date {date} precedes January 1985"));
    }
    let category = classify_category(field(cols.category), synonyms).map_err(|e| e.to_string())?;
    let ecology = EcologyAttrs {
        vegetation: cols
            .vegetation
            .map(|i| Vegetation::parse(field(i)))
            .unwrap_or_default(),
        soil_moisture: cols
            .soil_moisture
            .map(|i| SoilMoisture::parse(field(i)))
            .unwrap_or_default(),
    };
    Ok(ObservationRecord {
        lon,
        lat,
        year: date.year(),
        month: date.month(),
        day: date.day(),
        category,
        ecology,
        source_line: line,
    })
}

/// Parses a header-bearing observation CSV. Each data row becomes either a
/// record or a diagnostic; only a missing mapped column is fatal.
pub fn parse_records<R: Read>(
    input: R,
    mapping: &ColumnMapping,
    synonyms: &CategorySynonyms,
) -> Result<(Vec<ObservationRecord>, Vec<Diagnostic>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let cols = ColumnPositions {
        lon: find_column(&headers, &mapping.lon)?,
        lat: find_column(&headers, &mapping.lat)?,
        date: find_column(&headers, &mapping.date)?,
        category: find_column(&headers, &mapping.category)?,
        vegetation: find_optional(&headers, &mapping.vegetation)?,
        soil_moisture: find_optional(&headers, &mapping.soil_moisture)?,
    };

    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut row = csv::StringRecord::new();
    let mut line = 1u64;
    loop {
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                line = row.position().map(|p| p.line()).unwrap_or(line + 1);
                match parse_row(&row, &cols, synonyms, line) {
                    Ok(rec) => records.push(rec),
                    Err(reason) => diagnostics.push(Diagnostic { line, reason }),
                }
            }
            Err(e) => {
                line = e.position().map(|p| p.line()).unwrap_or(line + 1);
                diagnostics.push(Diagnostic {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(e.into());
                }
            }
        }
    }
    Ok((records, diagnostics))
}

/// Splits records into those inside the grid and diagnostics for the rest.
pub fn partition_in_grid(
    records: Vec<ObservationRecord>,
    spec: &GridSpec,
) -> (Vec<ObservationRecord>, Vec<Diagnostic>) {
    let mut kept = Vec::with_capacity(records.len());
    let mut dropped = Vec::new();
    for rec in records {
        match locate_cell(rec.lon, rec.lat, spec) {
            Ok(_) => kept.push(rec),
            Err(e) => dropped.push(Diagnostic {
                line: rec.source_line,
                reason: e.to_string(),
            }),
        }
    }
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMonthFeatures {
    pub cell: CellIndex,
    pub month: MonthIndex,
    pub features: FeatureVector,
    pub swarm_count: u32,
    pub swarm_kernel_count: u32,
}

#[derive(Default)]
struct CellMonthAcc {
    counts: [u32; 4],
    vegetation: [u32; 4],
    soil: [u32; 3],
}

/// Index of the largest count, ties going to the earliest position.
fn modal(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

pub fn seasonal_encoding(month: MonthIndex) -> (f64, f64) {
    let angle = 2.0 * PI * month.month_of_year() as f64 / 12.0;
    (angle.sin(), angle.cos())
}

/// Summed-area table over one month's dense swarm-count grid.
struct SwarmIntegral {
    n_x: usize,
    sums: Vec<u64>,
}

impl SwarmIntegral {
    fn new(counts: &[u32], n_x: usize, n_y: usize) -> Self {
        let w = n_x + 1;
        let mut sums = vec![0u64; w * (n_y + 1)];
        for y in 0..n_y {
            let mut row = 0u64;
            for x in 0..n_x {
                row += counts[y * n_x + x] as u64;
                sums[(y + 1) * w + x + 1] = sums[y * w + x + 1] + row;
            }
        }
        SwarmIntegral { n_x, sums }
    }

    /// Sum over the inclusive window [x0, x1] × [y0, y1].
    fn window(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> u64 {
        let w = self.n_x + 1;
        let at = |x: usize, y: usize| self.sums[y * w + x];
        at(x1 + 1, y1 + 1) + at(x0, y0) - at(x0, y1 + 1) - at(x1 + 1, y0)
    }
}

/// One feature row per (cell, month) with at least one record, ordered by
/// month, then `y`, then `x`. Fails on records outside the grid.
pub fn aggregate_monthly(
    records: &[ObservationRecord],
    spec: &GridSpec,
    k: usize,
) -> Result<Vec<CellMonthFeatures>> {
    let radius = check_kernel(k)?;
    let mut cells: BTreeMap<(MonthIndex, usize, usize), CellMonthAcc> = BTreeMap::new();
    for rec in records {
        let cell = locate_cell(rec.lon, rec.lat, spec)?;
        let month = rec.month_index()?;
        let acc = cells.entry((month, cell.y, cell.x)).or_default();
        acc.counts[rec.category.index()] += 1;
        acc.vegetation[rec.ecology.vegetation as usize] += 1;
        acc.soil[rec.ecology.soil_moisture as usize] += 1;
    }

    let mut rows = Vec::with_capacity(cells.len());
    let mut dense = vec![0u32; spec.n_cells()];
    let entries: Vec<_> = cells.into_iter().collect();
    let mut start = 0;
    while start < entries.len() {
        let month = entries[start].0 .0;
        let end = start
            + entries[start..]
                .iter()
                .take_while(|e| e.0 .0 == month)
                .count();
        let group = &entries[start..end];

        dense.iter_mut().for_each(|v| *v = 0);
        for ((_, y, x), acc) in group {
            dense[y * spec.n_x + x] = acc.counts[LocustCategory::Swarm.index()];
        }
        let integral = SwarmIntegral::new(&dense, spec.n_x, spec.n_y);
        let (sin, cos) = seasonal_encoding(month);

        for &((_, y, x), ref acc) in group {
            let kernel = integral.window(
                x.saturating_sub(radius),
                (x + radius).min(spec.n_x - 1),
                y.saturating_sub(radius),
                (y + radius).min(spec.n_y - 1),
            ) as u32;
            let mut f = [0.0; FEATURE_DIM];
            for (i, &c) in acc.counts.iter().enumerate() {
                f[i] = c as f64;
            }
            f[DIM_SWARM_KERNEL] = kernel as f64;
            f[DIM_VEGETATION + modal(&acc.vegetation)] = 1.0;
            f[DIM_SOIL + modal(&acc.soil)] = 1.0;
            f[DIM_SEASON_SIN] = sin;
            f[DIM_SEASON_COS] = cos;
            f[DIM_PRESENCE] = 1.0;
            rows.push(CellMonthFeatures {
                cell: CellIndex { x, y },
                month,
                features: f,
                swarm_count: acc.counts[LocustCategory::Swarm.index()],
                swarm_kernel_count: kernel,
            });
        }
        start = end;
    }
    Ok(rows)
}

pub fn table_header() -> Vec<String> {
    let mut h = vec!["cell_x".to_string(), "cell_y".into(), "month_index".into()];
    h.extend((0..FEATURE_DIM).map(|i| format!("f{i}")));
    h.push("swarm_count".into());
    h.push("swarm_kernel_count".into());
    h
}

/// Writes the aggregated table as CSV. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_table<W: Write>(rows: &[CellMonthFeatures], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(table_header())?;
    for r in rows {
        let mut rec = vec![
            r.cell.x.to_string(),
            r.cell.y.to_string(),
            r.month.0.to_string(),
        ];
        rec.extend(r.features.iter().map(|v| v.to_string()));
        rec.push(r.swarm_count.to_string());
        rec.push(r.swarm_kernel_count.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(input: R) -> Result<Vec<CellMonthFeatures>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header != table_header() {
        return Err(Error::Data(format!(
            "aggregated table header mismatch: expected {:?}",
            table_header().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::Data(format!("table line {line}: bad {what}"));
        let int = |i: usize, what: &str| -> Result<u64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad(what))
        };
        let mut features = [0.0; FEATURE_DIM];
        for (d, slot) in features.iter_mut().enumerate() {
            *slot = rec
                .get(3 + d)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(&format!("f{d}")))?;
        }
        let row = CellMonthFeatures {
            cell: CellIndex::new(int(0, "cell_x")? as usize, int(1, "cell_y")? as usize),
            month: MonthIndex(int(2, "month_index")? as u32),
            features,
            swarm_count: int(3 + FEATURE_DIM, "swarm_count")? as u32,
            swarm_kernel_count: int(4 + FEATURE_DIM, "swarm_kernel_count")? as u32,
        };
        if row.swarm_kernel_count < row.swarm_count {
            return Err(bad("swarm_kernel_count (below swarm_count)"));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{kernel_cells, GeoBounds};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const HEADER: &str = "X,Y,STARTDATE,LOCUSTTYPE,VEGSTATE,SOILMOIST\n";

    fn parse(csv_text: &str) -> (Vec<ObservationRecord>, Vec<Diagnostic>) {
        parse_records(
            csv_text.as_bytes(),
            &ColumnMapping::default(),
            &CategorySynonyms::default(),
        )
        .unwrap()
    }

    fn rec(
        lon: f64,
        lat: f64,
        year: i32,
        month: u32,
        category: LocustCategory,
    ) -> ObservationRecord {
        ObservationRecord {
            lon,
            lat,
            year,
            month,
            day: 1,
            category,
            ecology: EcologyAttrs::default(),
            source_line: 0,
        }
    }

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::new(GeoBounds::new(0.0, n as f64, 0.0, n as f64).unwrap(), n, n).unwrap()
    }

    #[test]
    fn classify_labels() {
        let syn = CategorySynonyms::default();
        assert_eq!(
            classify_category("Swarm", &syn).unwrap(),
            LocustCategory::Swarm
        );
        assert_eq!(
            classify_category("HOPPER", &syn).unwrap(),
            LocustCategory::Hopper
        );
        assert_eq!(
            classify_category(" bands ", &syn).unwrap(),
            LocustCategory::Band
        );
        match classify_category("locust-cloud", &syn) {
            Err(Error::UnknownCategory(l)) => assert_eq!(l, "locust-cloud"),
            other => panic!("expected unknown category, got {other:?}"),
        }
    }

    #[test]
    fn parse_valid_rows() {
        let text = format!(
            "{HEADER}10.5,20.5,2020-01-15,Swarm,Green,Wet\n11,21,2020/02/01 00:00:00,Adult,,\n\"12\",22,2020-03-01T00:00:00,hopper,Dry,Dry\n"
        );
        let (recs, diags) = parse(&text);
        assert_eq!(recs.len(), 3);
        assert!(diags.is_empty());
        assert_eq!(recs[0].ecology.vegetation, Vegetation::Green);
        assert_eq!(recs[0].ecology.soil_moisture, SoilMoisture::Wet);
        assert_eq!(recs[1].ecology, EcologyAttrs::default());
        assert_eq!((recs[1].year, recs[1].month, recs[1].day), (2020, 2, 1));
        assert_eq!(recs[2].category, LocustCategory::Hopper);
        assert_eq!(recs[2].source_line, 4);
    }

    #[test]
    fn empty_coordinate_is_a_diagnostic() {
        let text = format!("{HEADER},20.5,2020-01-15,Swarm,Green,Wet\n");
        let (recs, diags) = parse(&text);
        assert!(recs.is_empty());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].line, 2);
        assert!(diags[0].reason.contains("longitude"));
    }

    #[test]
    fn malformed_dates_fixture() {
        let rows = [
            "1,1,2001-01-01,swarm,,",
            "2,2,2001-02-30,swarm,,",
            "3,3,2001-03-01,adult,,",
            "4,4,2001-04-01,band,,",
            "5,5,not-a-date,hopper,,",
            "6,6,2001-06-01,swarm,,",
            "7,7,2001-07-01,swarm,,",
            "8,8,2001-08-01,adult,,",
            "9,9,2001-09-01,adult,,",
            "10,10,2001-10-01,band,,",
        ];
        let text = format!("{HEADER}{}\n", rows.join("\n"));
        let (recs, diags) = parse(&text);
        assert_eq!(recs.len(), 8);
        assert_eq!(diags.len(), 2);
        assert_eq!(diags.iter().map(|d| d.line).collect::<Vec<_>>(), vec![3, 6]);
    }

    #[test]
    fn unknown_category_and_pre_epoch_rows_are_diagnostics() {
        let text = format!("{HEADER}1,1,2001-01-01,locust-cloud,,\n1,1,1984-12-31,swarm,,\n");
        let (recs, diags) = parse(&text);
        assert!(recs.is_empty());
        assert_eq!(diags.len(), 2);
        assert!(diags[0].reason.contains("locust-cloud"));
    }

    #[test]
    fn missing_mapped_column_is_fatal() {
        let text = "X,Y,STARTDATE,VEGSTATE,SOILMOIST\n1,1,2001-01-01,,\n";
        let err = parse_records(
            text.as_bytes(),
            &ColumnMapping::default(),
            &CategorySynonyms::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "LOCUSTTYPE"));
    }

    #[test]
    fn ecology_columns_may_be_unmapped() {
        let mapping = ColumnMapping {
            vegetation: String::new(),
            soil_moisture: String::new(),
            ..ColumnMapping::default()
        };
        let text = "X,Y,STARTDATE,LOCUSTTYPE\n1,1,2001-01-01,swarm\n";
        let (recs, _) =
            parse_records(text.as_bytes(), &mapping, &CategorySynonyms::default()).unwrap();
        assert_eq!(recs[0].ecology, EcologyAttrs::default());
    }

    #[test]
    fn single_swarm_row() {
        let spec = unit_grid(10);
        let rows =
            aggregate_monthly(&[rec(4.5, 4.5, 2000, 3, LocustCategory::Swarm)], &spec, 3).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].cell, CellIndex::new(4, 4));
        assert_eq!(rows[0].month, month_index(2000, 3).unwrap());
        assert_eq!(rows[0].swarm_count, 1);
        assert_eq!(rows[0].swarm_kernel_count, 1);
        let f = rows[0].features;
        assert_eq!(&f[..5], &[0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(f[DIM_VEGETATION], 1.0);
        assert_eq!(f[DIM_SOIL], 1.0);
        assert_eq!(f[DIM_PRESENCE], 1.0);
    }

    #[test]
    fn adjacent_swarms_include_each_other() {
        let spec = unit_grid(10);
        let recs = [
            rec(4.5, 4.5, 2000, 3, LocustCategory::Swarm),
            rec(5.5, 4.5, 2000, 3, LocustCategory::Swarm),
        ];
        let rows = aggregate_monthly(&recs, &spec, 3).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows
            .iter()
            .all(|r| r.swarm_kernel_count == 2 && r.swarm_count == 1));
    }

    #[test]
    fn modal_ecology_breaks_ties_by_enumeration_order() {
        let spec = unit_grid(4);
        let mut a = rec(1.5, 1.5, 2000, 1, LocustCategory::Adult);
        a.ecology = EcologyAttrs {
            vegetation: Vegetation::Green,
            soil_moisture: SoilMoisture::Wet,
        };
        let mut b = a.clone();
        b.ecology = EcologyAttrs {
            vegetation: Vegetation::Dry,
            soil_moisture: SoilMoisture::Wet,
        };
        let rows = aggregate_monthly(&[a, b], &spec, 3).unwrap();
        let f = rows[0].features;
        assert_eq!(
            &f[DIM_VEGETATION..DIM_VEGETATION + 4],
            &[0.0, 1.0, 0.0, 0.0]
        );
        assert_eq!(&f[DIM_SOIL..DIM_SOIL + 3], &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn output_order_is_month_then_y_then_x() {
        let spec = unit_grid(5);
        let recs = [
            rec(0.5, 3.5, 2001, 1, LocustCategory::Adult),
            rec(3.5, 0.5, 2001, 1, LocustCategory::Adult),
            rec(0.5, 0.5, 2000, 6, LocustCategory::Adult),
        ];
        let rows = aggregate_monthly(&recs, &spec, 1).unwrap();
        let keys: Vec<_> = rows
            .iter()
            .map(|r| (r.month.0, r.cell.y, r.cell.x))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(keys[0].0, month_index(2000, 6).unwrap().0);
    }

    #[test]
    fn out_of_grid_records_are_partitioned() {
        let spec = unit_grid(5);
        let mut far = rec(50.0, 0.5, 2001, 1, LocustCategory::Adult);
        far.source_line = 9;
        let (kept, dropped) = partition_in_grid(
            vec![rec(1.0, 1.0, 2001, 1, LocustCategory::Swarm), far],
            &spec,
        );
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped[0].line, 9);
        assert!(dropped[0].reason.contains("longitude"));
    }

    #[test]
    fn table_round_trip() {
        let spec = unit_grid(6);
        let recs = [
            rec(0.5, 0.5, 2000, 1, LocustCategory::Swarm),
            rec(1.5, 0.5, 2000, 1, LocustCategory::Hopper),
            rec(2.5, 5.5, 2003, 11, LocustCategory::Swarm),
        ];
        let rows = aggregate_monthly(&recs, &spec, 3).unwrap();
        let mut buf = Vec::new();
        write_table(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("cell_x,cell_y,month_index,f0,f1,"));
        assert_eq!(read_table(buf.as_slice()).unwrap(), rows);
    }

    /// Kernel sums by explicit neighbour enumeration.
    fn brute_kernel(
        rows: &[CellMonthFeatures],
        row: &CellMonthFeatures,
        k: usize,
        spec: &GridSpec,
    ) -> u32 {
        kernel_cells(row.cell, k, spec)
            .unwrap()
            .iter()
            .map(|c| {
                rows.iter()
                    .filter(|r| r.month == row.month && r.cell == *c)
                    .map(|r| r.swarm_count)
                    .sum::<u32>()
            })
            .sum()
    }

    #[test]
    fn kernel_counts_match_brute_force_on_random_records() {
        let spec = unit_grid(5);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let recs: Vec<_> = (0..50)
            .map(|_| {
                let cat = LocustCategory::ALL[rng.random_range(0..4)];
                rec(
                    rng.random_range(0.0..5.0),
                    rng.random_range(0.0..5.0),
                    2000,
                    1,
                    cat,
                )
            })
            .collect();
        let rows = aggregate_monthly(&recs, &spec, 3).unwrap();
        for r in &rows {
            assert_eq!(r.swarm_kernel_count, brute_kernel(&rows, r, 3, &spec));
        }
    }

    proptest! {
        #[test]
        fn aggregation_invariants(seed in any::<u64>(), n in 1usize..12, count in 1usize..80, k in prop::sample::select(vec![1usize, 3, 5])) {
            let spec = unit_grid(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut recs: Vec<_> = (0..count)
                .map(|_| {
                    let cat = LocustCategory::ALL[rng.random_range(0..4)];
                    let mut r = rec(rng.random_range(0.0..=n as f64), rng.random_range(0.0..=n as f64),
                        2000 + rng.random_range(0..2), rng.random_range(1..=12), cat);
                    r.ecology.vegetation = Vegetation::ALL[rng.random_range(0..4)];
                    r.ecology.soil_moisture = SoilMoisture::ALL[rng.random_range(0..3)];
                    r
                })
                .collect();
            let rows = aggregate_monthly(&recs, &spec, k).unwrap();

            // Mass conservation per month.
            let mut months: Vec<_> = rows.iter().map(|r| r.month).collect();
            months.dedup();
            for m in months {
                let gridded: u32 = rows.iter().filter(|r| r.month == m).map(|r| r.swarm_count).sum();
                let raw = recs.iter().filter(|r| r.month_index().unwrap() == m && r.category == LocustCategory::Swarm).count();
                prop_assert_eq!(gridded as usize, raw);
            }
            for r in &rows {
                prop_assert!(r.swarm_kernel_count >= r.swarm_count);
                prop_assert_eq!(r.swarm_kernel_count, brute_kernel(&rows, r, k, &spec));
                let veg: f64 = r.features[DIM_VEGETATION..DIM_VEGETATION + 4].iter().sum();
                let soil: f64 = r.features[DIM_SOIL..DIM_SOIL + 3].iter().sum();
                prop_assert_eq!(veg, 1.0);
                prop_assert_eq!(soil, 1.0);
            }

            recs.shuffle(&mut rng);
            prop_assert_eq!(aggregate_monthly(&recs, &spec, k).unwrap(), rows);
        }
    }
}
