//! Historical observations with per-series missingness.

use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column header of the observation CSV format.
pub const OBSERVATION_HEADER: [&str; 4] = [
    "year",
    "population_gt_billions",
    "gwp_trillions_2011usd",
    "emissions_gtc_per_yr",
];

/// The three modelled output series, in residual-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Series {
    Population,
    Gwp,
    Emissions,
}

impl Series {
    pub const ALL: [Series; 3] = [Series::Population, Series::Gwp, Series::Emissions];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Series::Population => "population",
            Series::Gwp => "gwp",
            Series::Emissions => "emissions",
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub year: i32,
    /// Billions.
    pub population: Option<f64>,
    /// Trillions 2011US$.
    pub gwp: Option<f64>,
    /// GtC per year.
    pub emissions: Option<f64>,
}

impl ObservationRecord {
    pub fn values(&self) -> [Option<f64>; 3] {
        [self.population, self.gwp, self.emissions]
    }

    pub fn get(&self, series: Series) -> Option<f64> {
        self.values()[series.index()]
    }

    pub fn is_empty(&self) -> bool {
        self.values().iter().all(Option::is_none)
    }
}

/// Validated annual observation records, strictly increasing in year.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    records: Vec<ObservationRecord>,
    /// Free-form source labels (comment lines of the ingested file).
    pub provenance: Vec<String>,
}

impl ObservationSet {
    pub fn new(records: Vec<ObservationRecord>) -> Result<Self> {
        for w in records.windows(2) {
            if w[1].year <= w[0].year {
                return Err(Error::data(format!(
                    "observation years must be strictly increasing ({} follows {})",
                    w[1].year, w[0].year
                )));
            }
        }
        for r in &records {
            for (s, v) in Series::ALL.iter().zip(r.values()) {
                if let Some(v) = v {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::data(format!(
                            "{} observation in {} must be positive, got {v}",
                            s, r.year
                        )));
                    }
                }
            }
        }
        Ok(ObservationSet {
            records,
            provenance: Vec::new(),
        })
    }

    pub fn records(&self) -> &[ObservationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn years(&self) -> Vec<i32> {
        self.records.iter().map(|r| r.year).collect()
    }

    pub fn first_year(&self) -> Option<i32> {
        self.records.first().map(|r| r.year)
    }

    pub fn last_year(&self) -> Option<i32> {
        self.records.last().map(|r| r.year)
    }

    /// Number of observed (non-missing) values.
    pub fn n_values(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.values().iter().filter(|v| v.is_some()).count())
            .sum()
    }

    /// Records whose year lies in `[start, end]`, dropping all-missing years.
    pub fn window(&self, start: i32, end: i32) -> ObservationSet {
        self.filter(|r| r.year >= start && r.year <= end)
    }

    /// Keeps records matching `keep`, dropping all-missing years.
    pub fn filter(&self, keep: impl Fn(&ObservationRecord) -> bool) -> ObservationSet {
        ObservationSet {
            records: self
                .records
                .iter()
                .filter(|r| keep(r) && !r.is_empty())
                .copied()
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// Parses the observation CSV format. Lines starting with `#` are kept as
    /// provenance labels; empty cells are missing values.
    pub fn from_reader(mut reader: impl Read, source_name: &str) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let provenance = text
            .lines()
            .filter_map(|l| l.trim_start().strip_prefix('#'))
            .map(|l| l.trim().to_string())
            .collect();

        let parse_err = |line: u64, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };

        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != OBSERVATION_HEADER {
            return Err(parse_err(
                1,
                format!(
                    "expected header `{}`, found `{}`",
                    OBSERVATION_HEADER.join(","),
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }

        let mut records: Vec<ObservationRecord> = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parse_err(line, e.to_string())
            })?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            if row.len() != 4 {
                return Err(parse_err(
                    line,
                    format!("expected 4 fields, found {}", row.len()),
                ));
            }
            let year: i32 = row[0]
                .parse()
                .map_err(|_| parse_err(line, format!("invalid year `{}`", &row[0])))?;
            let mut vals = [None; 3];
            for (k, v) in vals.iter_mut().enumerate() {
                let cell = &row[k + 1];
                if cell.is_empty() {
                    continue;
                }
                let x: f64 = cell.parse().map_err(|_| {
                    parse_err(
                        line,
                        format!(
                            "invalid number `{cell}` in column {}",
                            OBSERVATION_HEADER[k + 1]
                        ),
                    )
                })?;
                if !(x.is_finite() && x > 0.0) {
                    return Err(parse_err(
                        line,
                        format!("{} must be positive, got {x}", OBSERVATION_HEADER[k + 1]),
                    ));
                }
                *v = Some(x);
            }
            if let Some(prev) = records.last() {
                if year == prev.year {
                    return Err(parse_err(line, format!("duplicate year {year}")));
                }
                if year < prev.year {
                    return Err(parse_err(
                        line,
                        format!("year {year} is not after the previous year {}", prev.year),
                    ));
                }
            }
            records.push(ObservationRecord {
                year,
                population: vals[0],
                gwp: vals[1],
                emissions: vals[2],
            });
        }
        let mut set = ObservationSet::new(records)?;
        set.provenance = provenance;
        Ok(set)
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(OBSERVATION_HEADER)?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.year.to_string(),
                cell(r.population),
                cell(r.gwp),
                cell(r.emissions),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Free function form of [`ObservationSet::from_path`].
pub fn ingest_observations(path: impl AsRef<Path>) -> Result<ObservationSet> {
    ObservationSet::from_path(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ObservationSet> {
        ObservationSet::from_reader(s.as_bytes(), "test.csv")
    }

    const HEADER: &str = "year,population_gt_billions,gwp_trillions_2011usd,emissions_gtc_per_yr\n";

    #[test]
    fn complete_row() {
        let obs = parse(&format!("{HEADER}1950,2.53,9.25,1.63\n")).unwrap();
        assert_eq!(obs.len(), 1);
        let r = obs.records()[0];
        assert_eq!(r.year, 1950);
        assert_eq!(r.values(), [Some(2.53), Some(9.25), Some(1.63)]);
    }

    #[test]
    fn empty_cell_is_missing() {
        let obs = parse(&format!("{HEADER}1820,1.04,,0.01\n")).unwrap();
        assert_eq!(obs.records()[0].gwp, None);
        assert_eq!(obs.records()[0].population, Some(1.04));
        assert_eq!(obs.n_values(), 2);
    }

    #[test]
    fn provenance_comments_are_kept() {
        let obs = parse(&format!("# source: synthetic\n{HEADER}1820,1.04,,0.01\n")).unwrap();
        assert_eq!(obs.provenance, vec!["source: synthetic".to_string()]);
    }

    #[test]
    fn duplicate_year_reports_line() {
        let err = parse(&format!("{HEADER}1950,2.53,9.25,1.63\n1950,2.6,9.3,1.7\n")).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_positive_value_rejected() {
        assert!(parse(&format!("{HEADER}1950,0,9.25,1.63\n")).is_err());
        assert!(parse(&format!("{HEADER}1950,2.5,-1,1.63\n")).is_err());
    }

    #[test]
    fn malformed_rows_rejected() {
        assert!(parse(&format!("{HEADER}1950,abc,9.25,1.63\n")).is_err());
        assert!(parse(&format!("{HEADER}1950,2.5,9.25\n")).is_err());
        assert!(parse("year,pop,gwp,em\n1950,1,1,1\n").is_err());
    }

    #[test]
    fn decreasing_years_rejected() {
        assert!(parse(&format!("{HEADER}1951,2.5,9.2,1.6\n1950,2.5,9.2,1.6\n")).is_err());
    }

    #[test]
    fn window_drops_outside_and_empty_years() {
        let recs = (1800..1810)
            .map(|y| ObservationRecord {
                year: y,
                population: if y == 1805 { None } else { Some(1.0) },
                gwp: None,
                emissions: None,
            })
            .collect();
        let obs = ObservationSet::new(recs).unwrap();
        let w = obs.window(1802, 1807);
        assert_eq!(w.years(), vec![1802, 1803, 1804, 1806, 1807]);
    }

    #[test]
    fn csv_round_trip() {
        let obs = parse(&format!("{HEADER}1820,1.04,,0.01\n1821,1.05,1.2,0.011\n")).unwrap();
        let mut buf = Vec::new();
        obs.write_csv(&mut buf).unwrap();
        let again = ObservationSet::from_reader(buf.as_slice(), "round").unwrap();
        assert_eq!(again.records(), obs.records());
    }
}
