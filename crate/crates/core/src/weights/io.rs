//! GAL and GWT weight-file formats.
//!
//! Both formats share the header line `0 <n> <dataset-name> <id-column>`.
//!
//! * GAL stores binary contiguity lists: per region a line `<id> <k>`
//!   followed by a line of k neighbor ids. Only matrices whose weights are
//!   all exactly 1 can be written as GAL.
//! * GWT stores one line per directed pair: `<id_i> <id_j> <weight>`,
//!   weights printed as shortest round-trip decimals. Islands are encoded
//!   as a self pair with weight 0, so a write/read round trip preserves the
//!   full region set.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightsFormat {
    Gal,
    Gwt,
}

impl WeightsFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<WeightsFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "gal" => Some(WeightsFormat::Gal),
            "gwt" => Some(WeightsFormat::Gwt),
            _ => None,
        }
    }
}

const HEADER_FLAG: &str = "0";
const DATASET_NAME: &str = "spacereg";
const ID_COLUMN: &str = "id";

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(|c| c.is_whitespace()) {
        return Err(Error::validation(format!(
            "region id '{id}' cannot be written to a whitespace-delimited weights file"
        )));
    }
    Ok(())
}

/// Serializes a weight matrix to GAL or GWT text.
pub fn write_weights_to_string(w: &WeightMatrix, format: WeightsFormat) -> Result<String> {
    for id in w.ids() {
        check_id(id)?;
    }
    let mut out = String::new();
    writeln!(
        out,
        "{HEADER_FLAG} {} {DATASET_NAME} {ID_COLUMN}",
        w.n()
    )
    .expect("string write");
    match format {
        WeightsFormat::Gal => {
            if w.entries().any(|(_, _, wt)| wt != 1.0) {
                return Err(Error::validation(
                    "GAL encodes binary contiguity only; weights other than 1 found \
                     (use GWT for weighted matrices)",
                ));
            }
            for i in 0..w.n() {
                let nbrs = w.neighbors(i);
                writeln!(out, "{} {}", w.ids()[i], nbrs.len()).expect("string write");
                let line = nbrs
                    .iter()
                    .map(|&(j, _)| w.ids()[j].as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                writeln!(out, "{line}").expect("string write");
            }
        }
        WeightsFormat::Gwt => {
            for i in 0..w.n() {
                let nbrs = w.neighbors(i);
                if nbrs.is_empty() {
                    // island convention: self pair with weight 0
                    writeln!(out, "{} {} 0", w.ids()[i], w.ids()[i]).expect("string write");
                } else {
                    for &(j, wt) in nbrs {
                        writeln!(out, "{} {} {}", w.ids()[i], w.ids()[j], wt)
                            .expect("string write");
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Writes a weight matrix to a file in the given format.
pub fn write_weights(w: &WeightMatrix, path: impl AsRef<Path>, format: WeightsFormat) -> Result<()> {
    let text = write_weights_to_string(w, format)?;
    std::fs::write(path.as_ref(), text)?;
    Ok(())
}

fn parse_header(line: &str, lineno: usize) -> Result<usize> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 4 {
        return Err(Error::parse(
            lineno,
            format!(
                "header must be '0 <n> <dataset-name> <id-column>', got {} tokens",
                toks.len()
            ),
        ));
    }
    if toks[0] != HEADER_FLAG {
        return Err(Error::parse(
            lineno,
            format!("header must start with '0', got '{}'", toks[0]),
        ));
    }
    toks[1]
        .parse::<usize>()
        .map_err(|_| Error::parse(lineno, format!("bad region count '{}'", toks[1])))
}

/// Detects the "every nonzero row sums to 1" property.
fn detect_standardized(rows: &[Vec<(usize, f64)>]) -> bool {
    let mut any = false;
    for row in rows {
        if row.is_empty() {
            continue;
        }
        any = true;
        let sum: f64 = row.iter().map(|&(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return false;
        }
    }
    any
}

/// Parses GAL or GWT text into a weight matrix.
pub fn read_weights_from_str(text: &str, format: WeightsFormat) -> Result<WeightMatrix> {
    let mut lines = text.lines().enumerate();
    let (hline_idx, hline) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty weights file"))?;
    let n = parse_header(hline, hline_idx + 1)?;
    if n == 0 {
        return Err(Error::parse(1, "region count must be positive"));
    }

    match format {
        WeightsFormat::Gal => read_gal(n, lines),
        WeightsFormat::Gwt => read_gwt(n, lines),
    }
}

fn read_gal<'a>(
    n: usize,
    mut lines: impl Iterator<Item = (usize, &'a str)>,
) -> Result<WeightMatrix> {
    // first pass: collect the region blocks (id, k, neighbor tokens, line numbers)
    let mut blocks: Vec<(String, Vec<String>, usize)> = Vec::with_capacity(n);
    for _ in 0..n {
        let (li, line) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "unexpected end of GAL file (missing region line)"))?;
        let lineno = li + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::parse(
                lineno,
                format!("region line must be '<id> <k>', got '{line}'"),
            ));
        }
        let id = toks[0].to_string();
        let k: usize = toks[1]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad neighbor count '{}'", toks[1])))?;
        let (nli, nline) = lines
            .next()
            .ok_or_else(|| Error::parse(lineno, "missing neighbor list line"))?;
        let nlineno = nli + 1;
        let nbrs: Vec<String> = nline.split_whitespace().map(str::to_string).collect();
        if nbrs.len() != k {
            return Err(Error::parse(
                nlineno,
                format!("expected {k} neighbor ids, got {}", nbrs.len()),
            ));
        }
        blocks.push((id, nbrs, nlineno));
    }
    if let Some((li, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(
            li + 1,
            format!("unexpected trailing content '{line}'"),
        ));
    }
    let ids: Vec<String> = blocks.iter().map(|(id, _, _)| id.clone()).collect();
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(n);
    for (i, id) in ids.iter().enumerate() {
        if index.insert(id.as_str(), i).is_some() {
            return Err(Error::parse(0, format!("duplicate region id '{id}'")));
        }
    }
    let mut entries = Vec::new();
    for (i, (_, nbrs, lineno)) in blocks.iter().enumerate() {
        let mut seen = std::collections::HashSet::new();
        for nb in nbrs {
            let j = *index.get(nb.as_str()).ok_or_else(|| {
                Error::parse(*lineno, format!("unknown neighbor id '{nb}'"))
            })?;
            if j == i {
                return Err(Error::parse(
                    *lineno,
                    format!("region '{nb}' lists itself as a neighbor"),
                ));
            }
            if !seen.insert(j) {
                return Err(Error::parse(
                    *lineno,
                    format!("duplicate neighbor pair ('{}', '{nb}')", ids[i]),
                ));
            }
            entries.push((i, j, 1.0));
        }
    }
    WeightMatrix::from_entries(ids, entries, false)
}

fn read_gwt<'a>(n: usize, lines: impl Iterator<Item = (usize, &'a str)>) -> Result<WeightMatrix> {
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |id: &str, ids: &mut Vec<String>, index: &mut HashMap<String, usize>| {
        if let Some(&i) = index.get(id) {
            i
        } else {
            let i = ids.len();
            ids.push(id.to_string());
            index.insert(id.to_string(), i);
            i
        }
    };
    let mut pairs: Vec<(usize, usize, f64, usize)> = Vec::new();
    let mut islands: Vec<usize> = Vec::new();
    for (li, line) in lines {
        let lineno = li + 1;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::parse(
                lineno,
                format!("pair line must be '<id_i> <id_j> <weight>', got '{line}'"),
            ));
        }
        let w: f64 = toks[2]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad weight '{}'", toks[2])))?;
        let i = intern(toks[0], &mut ids, &mut index);
        let j = intern(toks[1], &mut ids, &mut index);
        if i == j {
            if w != 0.0 {
                return Err(Error::parse(
                    lineno,
                    format!(
                        "self pair '{}' must carry weight 0 (island convention), got {w}",
                        toks[0]
                    ),
                ));
            }
            islands.push(i);
            continue;
        }
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::parse(
                lineno,
                format!("weight must be positive and finite, got {w}"),
            ));
        }
        pairs.push((i, j, w, lineno));
    }
    if ids.len() != n {
        return Err(Error::parse(
            1,
            format!(
                "header declares {n} regions but {} distinct ids appear",
                ids.len()
            ),
        ));
    }
    let mut seen = std::collections::HashSet::new();
    for &(i, j, _, lineno) in &pairs {
        if !seen.insert((i, j)) {
            return Err(Error::parse(
                lineno,
                format!("duplicate pair ('{}', '{}')", ids[i], ids[j]),
            ));
        }
    }
    for &isl in &islands {
        if pairs.iter().any(|&(i, _, _, _)| i == isl) {
            return Err(Error::parse(
                1,
                format!(
                    "region '{}' declared an island but also lists neighbors",
                    ids[isl]
                ),
            ));
        }
    }
    let entries: Vec<(usize, usize, f64)> = pairs.into_iter().map(|(i, j, w, _)| (i, j, w)).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(i, j, w) in &entries {
        rows[i].push((j, w));
    }
    let standardized = detect_standardized(&rows);
    WeightMatrix::from_entries(ids, entries, standardized)
}

/// Reads a weight matrix from a file.
pub fn read_weights(path: impl AsRef<Path>, format: WeightsFormat) -> Result<WeightMatrix> {
    let text = std::fs::read_to_string(path.as_ref())?;
    read_weights_from_str(&text, format)
}
