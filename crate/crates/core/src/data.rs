//! Region datasets: ids, centroid coordinates, and product levels at the
//! start and end of the observation period.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How centroid coordinates are to be interpreted when measuring distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateSystem {
    /// Planar coordinates in kilometres; distances are Euclidean.
    PlanarKm,
    /// Longitude/latitude in decimal degrees; distances are great-circle.
    LonLatDegrees,
}

impl CoordinateSystem {
    pub fn as_str(&self) -> &'static str {
        match self {
            CoordinateSystem::PlanarKm => "planar_km",
            CoordinateSystem::LonLatDegrees => "lonlat_degrees",
        }
    }
}

/// One region: identifier, centroid, and product levels at the initial and
/// final period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub p0: f64,
    pub pt: f64,
}

/// An ordered collection of regions observed over a period of `T` years.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<RegionRecord>,
    period_length_t: f64,
    coordinate_system: CoordinateSystem,
}

impl Dataset {
    /// Validates and wraps a set of region records.
    ///
    /// Requires at least 3 records, a positive period length, unique ids,
    /// strictly positive products, and finite coordinates.
    pub fn new(
        records: Vec<RegionRecord>,
        period_length_t: f64,
        coordinate_system: CoordinateSystem,
    ) -> Result<Self> {
        if records.len() < 3 {
            return Err(Error::validation(format!(
                "dataset needs at least 3 regions, got {}",
                records.len()
            )));
        }
        if !(period_length_t > 0.0) || !period_length_t.is_finite() {
            return Err(Error::validation(format!(
                "period length T must be positive and finite, got {period_length_t}"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for (row, r) in records.iter().enumerate() {
            let where_ = format!("region '{}' (record {})", r.id, row + 1);
            if !seen.insert(r.id.as_str()) {
                return Err(Error::validation(format!("{where_}: duplicate id")));
            }
            if !r.x.is_finite() || !r.y.is_finite() {
                return Err(Error::validation(format!(
                    "{where_}: non-finite coordinates ({}, {})",
                    r.x, r.y
                )));
            }
            if !(r.p0 > 0.0) || !r.p0.is_finite() {
                return Err(Error::validation(format!(
                    "{where_}: p0 must be positive, got {}",
                    r.p0
                )));
            }
            if !(r.pt > 0.0) || !r.pt.is_finite() {
                return Err(Error::validation(format!(
                    "{where_}: pt must be positive, got {}",
                    r.pt
                )));
            }
        }
        Ok(Dataset {
            records,
            period_length_t,
            coordinate_system,
        })
    }

    pub fn records(&self) -> &[RegionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn period_length_t(&self) -> f64 {
        self.period_length_t
    }

    pub fn coordinate_system(&self) -> CoordinateSystem {
        self.coordinate_system
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    /// Reads a dataset from CSV with the mandatory header `id,x,y,p0,pt`.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        period_length_t: f64,
        coordinate_system: CoordinateSystem,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        {
            let headers = rdr
                .headers()
                .map_err(|e| Error::parse(1, format!("cannot read CSV header: {e}")))?;
            let expected = ["id", "x", "y", "p0", "pt"];
            let got: Vec<&str> = headers.iter().map(|h| h.trim()).collect();
            if got != expected {
                return Err(Error::parse(
                    1,
                    format!(
                        "CSV header must be 'id,x,y,p0,pt', got '{}'",
                        got.join(",")
                    ),
                ));
            }
        }
        let mut records = Vec::new();
        for (idx, row) in rdr.deserialize::<RegionRecord>().enumerate() {
            // +2: one for the header, one because idx is 0-based
            let line = idx + 2;
            let rec = row.map_err(|e| Error::parse(line, format!("bad CSV row: {e}")))?;
            records.push(rec);
        }
        Dataset::new(records, period_length_t, coordinate_system)
    }

    pub fn from_csv_path(
        path: impl AsRef<Path>,
        period_length_t: f64,
        coordinate_system: CoordinateSystem,
    ) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(std::io::BufReader::new(file), period_length_t, coordinate_system)
    }

    /// Writes the dataset back out in the canonical CSV schema.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["id", "x", "y", "p0", "pt"])
            .map_err(|e| Error::validation(format!("csv write failed: {e}")))?;
        for r in &self.records {
            wtr.write_record([
                r.id.as_str(),
                &format!("{}", r.x),
                &format!("{}", r.y),
                &format!("{}", r.p0),
                &format!("{}", r.pt),
            ])
            .map_err(|e| Error::validation(format!("csv write failed: {e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// SHA-256 digest over the canonical row serialization, independent of
    /// the formatting of the source file.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.coordinate_system.as_str().as_bytes());
        hasher.update(format!(";T={}", self.period_length_t).as_bytes());
        for r in &self.records {
            hasher.update(format!("\n{},{},{},{},{}", r.id, r.x, r.y, r.p0, r.pt).as_bytes());
        }
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, x: f64, y: f64, p0: f64, pt: f64) -> RegionRecord {
        RegionRecord {
            id: id.to_string(),
            x,
            y,
            p0,
            pt,
        }
    }

    #[test]
    fn rejects_small_datasets() {
        let err = Dataset::new(
            vec![rec("a", 0.0, 0.0, 1.0, 1.0), rec("b", 1.0, 0.0, 1.0, 1.0)],
            10.0,
            CoordinateSystem::PlanarKm,
        )
        .unwrap_err();
        assert!(err.to_string().contains("at least 3"));
    }

    #[test]
    fn rejects_nonpositive_product_naming_region() {
        let err = Dataset::new(
            vec![
                rec("a", 0.0, 0.0, 1.0, 1.0),
                rec("b", 1.0, 0.0, 0.0, 1.0),
                rec("c", 2.0, 0.0, 1.0, 1.0),
            ],
            10.0,
            CoordinateSystem::PlanarKm,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'b'") && msg.contains("p0"), "got: {msg}");
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = Dataset::new(
            vec![
                rec("a", 0.0, 0.0, 1.0, 1.0),
                rec("a", 1.0, 0.0, 1.0, 1.0),
                rec("c", 2.0, 0.0, 1.0, 1.0),
            ],
            10.0,
            CoordinateSystem::PlanarKm,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate id"));
    }

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::new(
            vec![
                rec("a", 0.0, 0.5, 100.0, 110.0),
                rec("b", 1.0, 0.25, 200.0, 190.0),
                rec("c", 3.0, -1.0, 50.0, 75.0),
            ],
            10.0,
            CoordinateSystem::PlanarKm,
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back =
            Dataset::from_csv_reader(buf.as_slice(), 10.0, CoordinateSystem::PlanarKm).unwrap();
        assert_eq!(ds, back);
        assert_eq!(ds.digest(), back.digest());
    }

    #[test]
    fn csv_error_names_line() {
        let text = "id,x,y,p0,pt\na,0,0,100,110\nb,1,zzz,200,190\nc,3,0,50,75\n";
        let err = Dataset::from_csv_reader(text.as_bytes(), 10.0, CoordinateSystem::PlanarKm)
            .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn csv_requires_exact_header() {
        let text = "region,x,y,p0,pt\na,0,0,100,110\n";
        let err = Dataset::from_csv_reader(text.as_bytes(), 10.0, CoordinateSystem::PlanarKm)
            .unwrap_err();
        assert!(err.to_string().contains("header"));
    }
}
