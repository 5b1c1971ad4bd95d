//! Combined two-sample dataset, variable roles and the missingness contract.
//!
//! Experimental (`E`) units carry `a` but neither `y` nor `z`; observational
//! (`O`) units carry `y` and `z` but not `a`. `w`, `s` and `x` are observed
//! for every unit. Any other missingness pattern is rejected on load.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variable role of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    W,
    Z,
    S,
    X,
    A,
    Y,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::W => "w",
            Role::Z => "z",
            Role::S => "s",
            Role::X => "x",
            Role::A => "a",
            Role::Y => "y",
        };
        f.write_str(s)
    }
}

/// Sample membership label `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sample {
    #[serde(rename = "E")]
    Experimental,
    #[serde(rename = "O")]
    Observational,
}

/// Read access to role-tagged values, shared by masked and unmasked records.
pub trait RoleAccess {
    /// Appends the values of `role` to `out`. Returns `false` when the role
    /// is absent on this record (nothing is appended in that case).
    fn extend_role(&self, role: Role, out: &mut Vec<f64>) -> bool;
}

/// One unit of the combined dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub y: Option<f64>,
    pub w: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub s: Vec<f64>,
    pub a: Option<bool>,
    pub x: Vec<f64>,
    pub g: Sample,
}

impl UnitRecord {
    pub fn is_experimental(&self) -> bool {
        self.g == Sample::Experimental
    }
}

impl RoleAccess for UnitRecord {
    fn extend_role(&self, role: Role, out: &mut Vec<f64>) -> bool {
        match role {
            Role::W => out.extend_from_slice(&self.w),
            Role::S => out.extend_from_slice(&self.s),
            Role::X => out.extend_from_slice(&self.x),
            Role::Z => match &self.z {
                Some(z) => out.extend_from_slice(z),
                None => return false,
            },
            Role::A => match self.a {
                Some(a) => out.push(if a { 1.0 } else { 0.0 }),
                None => return false,
            },
            Role::Y => match self.y {
                Some(y) => out.push(y),
                None => return false,
            },
        }
        true
    }
}

/// Per-role dimensionalities of the vector-valued roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub w: usize,
    pub z: usize,
    pub s: usize,
    pub x: usize,
}

impl Dims {
    /// Number of raw values a role contributes (1 for the scalar roles).
    pub fn of(&self, role: Role) -> usize {
        match role {
            Role::W => self.w,
            Role::Z => self.z,
            Role::S => self.s,
            Role::X => self.x,
            Role::A | Role::Y => 1,
        }
    }
}

/// Combined experimental + observational dataset. Immutable after
/// construction; every record satisfies the masking contract.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedDataset {
    records: Vec<UnitRecord>,
    dims: Dims,
    n_e: usize,
    n_o: usize,
}

impl CombinedDataset {
    /// Validates every record against the masking contract and `dims`.
    pub fn new(records: Vec<UnitRecord>, dims: Dims) -> Result<Self> {
        let mut n_e = 0;
        let mut n_o = 0;
        for (i, r) in records.iter().enumerate() {
            validate_record(r, &dims, i + 1)?;
            match r.g {
                Sample::Experimental => n_e += 1,
                Sample::Observational => n_o += 1,
            }
        }
        if n_e == 0 || n_o == 0 {
            return Err(Error::Validation(format!(
                "both samples must be non-empty (n_e = {n_e}, n_o = {n_o})"
            )));
        }
        Ok(Self {
            records,
            dims,
            n_e,
            n_o,
        })
    }

    pub fn records(&self) -> &[UnitRecord] {
        &self.records
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n_e(&self) -> usize {
        self.n_e
    }

    pub fn n_o(&self) -> usize {
        self.n_o
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn validate_record(r: &UnitRecord, dims: &Dims, row: usize) -> Result<()> {
    let violation = |msg: &str| Error::SchemaViolation {
        row,
        msg: msg.to_string(),
    };
    match r.g {
        Sample::Experimental => {
            if r.a.is_none() {
                return Err(violation("experimental unit without treatment `a`"));
            }
            if r.y.is_some() {
                return Err(violation("experimental unit carries outcome `y`"));
            }
            if r.z.is_some() {
                return Err(violation("experimental unit carries proxy `z`"));
            }
        }
        Sample::Observational => {
            if r.a.is_some() {
                return Err(violation("observational unit carries treatment `a`"));
            }
            if r.y.is_none() {
                return Err(violation("observational unit without outcome `y`"));
            }
            if r.z.is_none() {
                return Err(violation("observational unit without proxy `z`"));
            }
        }
    }
    let check_len = |name: &str, got: usize, want: usize| {
        if got != want {
            Err(Error::Validation(format!(
                "row {row}: `{name}` has length {got}, expected {want}"
            )))
        } else {
            Ok(())
        }
    };
    check_len("w", r.w.len(), dims.w)?;
    check_len("s", r.s.len(), dims.s)?;
    check_len("x", r.x.len(), dims.x)?;
    if let Some(z) = &r.z {
        check_len("z", z.len(), dims.z)?;
    }
    let finite =
        r.w.iter()
            .chain(&r.s)
            .chain(&r.x)
            .chain(r.z.iter().flatten())
            .chain(r.y.iter())
            .all(|v| v.is_finite());
    if !finite {
        return Err(Error::Validation(format!("row {row}: non-finite value")));
    }
    Ok(())
}

/// Estimated share of experimental units, the plug-in for P(G = E).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleShare(pub f64);

pub fn sample_share(data: &CombinedDataset) -> SampleShare {
    SampleShare(data.n_e() as f64 / data.len() as f64)
}

/// Partitions the records by sample label into (experimental, observational)
/// views, preserving record order.
pub fn split_by_sample(data: &CombinedDataset) -> (Vec<&UnitRecord>, Vec<&UnitRecord>) {
    data.records().iter().partition(|r| r.is_experimental())
}

/// A unit with every variable observed, as in a randomized trial before
/// masking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullRecord {
    pub y: f64,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub a: bool,
    pub x: Vec<f64>,
}

impl RoleAccess for FullRecord {
    fn extend_role(&self, role: Role, out: &mut Vec<f64>) -> bool {
        match role {
            Role::W => out.extend_from_slice(&self.w),
            Role::Z => out.extend_from_slice(&self.z),
            Role::S => out.extend_from_slice(&self.s),
            Role::X => out.extend_from_slice(&self.x),
            Role::A => out.push(if self.a { 1.0 } else { 0.0 }),
            Role::Y => out.push(self.y),
        }
        true
    }
}

/// Fully observed experimental data: the source for the diagnostics, the RCT
/// benchmark and the split-and-mask design.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentalSource {
    records: Vec<FullRecord>,
    dims: Dims,
}

impl ExperimentalSource {
    pub fn new(records: Vec<FullRecord>, dims: Dims) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Validation("experimental source is empty".into()));
        }
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            if r.w.len() != dims.w || r.z.len() != dims.z || r.s.len() != dims.s || r.x.len() != dims.x {
                return Err(Error::Validation(format!(
                    "row {row}: vector lengths do not match dims"
                )));
            }
            let finite = std::iter::once(&r.y)
                .chain(&r.w)
                .chain(&r.z)
                .chain(&r.s)
                .chain(&r.x)
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::Validation(format!("row {row}: non-finite value")));
            }
        }
        Ok(Self { records, dims })
    }

    pub fn records(&self) -> &[FullRecord] {
        &self.records
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Column-to-role mapping for CSV files.
///
/// Scalar roles (`y`, `a`, `g`) are matched by exact column name. Vector roles
/// are matched by name prefix; matching columns keep their header order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub y: String,
    pub a: String,
    pub g: String,
    pub w: Vec<String>,
    pub z: Vec<String>,
    pub s: Vec<String>,
    pub x: Vec<String>,
    pub label_e: String,
    pub label_o: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            y: "y".into(),
            a: "a".into(),
            g: "g".into(),
            w: vec!["w".into()],
            z: vec!["z".into()],
            s: vec!["s".into()],
            x: vec!["x".into()],
            label_e: "E".into(),
            label_o: "O".into(),
        }
    }
}

pub const MISSING_TOKEN: &str = "NA";

#[derive(Debug, Default)]
struct ColumnMap {
    y: Option<usize>,
    a: Option<usize>,
    g: Option<usize>,
    w: Vec<usize>,
    z: Vec<usize>,
    s: Vec<usize>,
    x: Vec<usize>,
}

impl ColumnMap {
    fn dims(&self) -> Dims {
        Dims {
            w: self.w.len(),
            z: self.z.len(),
            s: self.s.len(),
            x: self.x.len(),
        }
    }
}

impl CsvSchema {
    fn map_header(&self, header: &csv::StringRecord) -> Result<ColumnMap> {
        let mut map = ColumnMap::default();
        for (idx, name) in header.iter().enumerate() {
            let name = name.trim();
            let mut hits: Vec<&str> = Vec::new();
            if name == self.y {
                hits.push("y");
                map.y = Some(idx);
            }
            if name == self.a {
                hits.push("a");
                map.a = Some(idx);
            }
            if name == self.g {
                hits.push("g");
                map.g = Some(idx);
            }
            // Scalar-role names are never also read as vector-role columns.
            if hits.is_empty() {
                let prefixed = |prefixes: &[String]| prefixes.iter().any(|p| name.starts_with(p.as_str()));
                for (role, prefixes, cols) in [
                    ("w", &self.w, &mut map.w),
                    ("z", &self.z, &mut map.z),
                    ("s", &self.s, &mut map.s),
                    ("x", &self.x, &mut map.x),
                ] {
                    if prefixed(prefixes) {
                        hits.push(role);
                        cols.push(idx);
                    }
                }
            }
            if hits.len() > 1 {
                return Err(Error::Validation(format!(
                    "column `{name}` matches several roles: {}",
                    hits.join(", ")
                )));
            }
        }
        Ok(map)
    }
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() || cell == MISSING_TOKEN {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("column `{column}`: cannot parse `{cell}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Validation(format!(
            "row {row}: column `{column}` holds non-finite value `{cell}`"
        )));
    }
    Ok(Some(v))
}

fn read_vector(
    rec: &csv::StringRecord,
    cols: &[usize],
    header: &csv::StringRecord,
    row: usize,
) -> Result<Vec<Option<f64>>> {
    cols.iter()
        .map(|&c| parse_cell(rec.get(c).unwrap_or(""), row, &header[c]))
        .collect()
}

fn all_present(v: Vec<Option<f64>>, role: Role, row: usize) -> Result<Vec<f64>> {
    v.into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::SchemaViolation {
            row,
            msg: format!("missing value in `{role}`"),
        })
}

fn parse_treatment(v: f64, row: usize) -> Result<bool> {
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(Error::Validation(format!(
            "row {row}: treatment `a` = {v} is not binary"
        )))
    }
}

/// Reads a combined dataset from a CSV file with a header row.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CombinedDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Reads a combined dataset from any CSV source.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<CombinedDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let map = schema.map_header(&header)?;
    let (yc, ac, gc) = match (map.y, map.a, map.g) {
        (Some(y), Some(a), Some(g)) => (y, a, g),
        _ => {
            return Err(Error::Validation(format!(
                "header must contain the columns `{}`, `{}` and `{}`",
                schema.y, schema.a, schema.g
            )))
        }
    };
    let dims = map.dims();
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let label = rec[gc].trim();
        let g = if label == schema.label_e {
            Sample::Experimental
        } else if label == schema.label_o {
            Sample::Observational
        } else {
            return Err(Error::Validation(format!(
                "row {row}: sample label `{label}` is neither `{}` nor `{}`",
                schema.label_e, schema.label_o
            )));
        };
        let y = parse_cell(&rec[yc], row, &header[yc])?;
        let a = parse_cell(&rec[ac], row, &header[ac])?;
        let z = read_vector(&rec, &map.z, &header, row)?;
        let w = all_present(read_vector(&rec, &map.w, &header, row)?, Role::W, row)?;
        let s = all_present(read_vector(&rec, &map.s, &header, row)?, Role::S, row)?;
        let x = all_present(read_vector(&rec, &map.x, &header, row)?, Role::X, row)?;
        let violation = |msg: &str| Error::SchemaViolation {
            row,
            msg: msg.to_string(),
        };
        let record = match g {
            Sample::Experimental => {
                if y.is_some() {
                    return Err(violation("experimental row carries outcome `y`"));
                }
                if z.iter().any(Option::is_some) {
                    return Err(violation("experimental row carries proxy `z`"));
                }
                let a = a.ok_or_else(|| violation("experimental row without treatment `a`"))?;
                UnitRecord {
                    y: None,
                    w,
                    z: None,
                    s,
                    a: Some(parse_treatment(a, row)?),
                    x,
                    g,
                }
            }
            Sample::Observational => {
                if a.is_some() {
                    return Err(violation("observational row carries treatment `a`"));
                }
                let y = y.ok_or_else(|| violation("observational row without outcome `y`"))?;
                let z = all_present(z, Role::Z, row)?;
                UnitRecord {
                    y: Some(y),
                    w,
                    z: Some(z),
                    s,
                    a: None,
                    x,
                    g,
                }
            }
        };
        records.push(record);
    }
    CombinedDataset::new(records, dims)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING_TOKEN.to_string(), |v| v.to_string())
}

fn canonical_header(dims: &Dims, with_g: bool) -> Vec<String> {
    let mut h: Vec<String> = Vec::new();
    if with_g {
        h.push("g".into());
    }
    h.push("a".into());
    h.push("y".into());
    for (p, n) in [("w", dims.w), ("z", dims.z), ("s", dims.s), ("x", dims.x)] {
        h.extend((1..=n).map(|j| format!("{p}{j}")));
    }
    h
}

/// Writes a combined dataset with the canonical header
/// (`g,a,y,w1..,z1..,s1..,x1..`) readable with [`CsvSchema::default`].
/// Values are written in shortest round-trip form.
pub fn write_csv(data: &CombinedDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_to(data, file)
}

pub fn write_csv_to<W: std::io::Write>(data: &CombinedDataset, writer: W) -> Result<()> {
    let dims = data.dims();
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(canonical_header(&dims, true))?;
    for r in data.records() {
        let mut row: Vec<String> = Vec::with_capacity(3 + dims.w + dims.z + dims.s + dims.x);
        row.push(if r.is_experimental() { "E" } else { "O" }.into());
        row.push(fmt_opt(r.a.map(|a| if a { 1.0 } else { 0.0 })));
        row.push(fmt_opt(r.y));
        row.extend(r.w.iter().map(f64::to_string));
        match &r.z {
            Some(z) => row.extend(z.iter().map(f64::to_string)),
            None => row.extend((0..dims.z).map(|_| MISSING_TOKEN.to_string())),
        }
        row.extend(r.s.iter().map(f64::to_string));
        row.extend(r.x.iter().map(f64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads fully observed experimental data. The `g` column is ignored when
/// present; every other role must be observed on every row.
pub fn load_full_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<ExperimentalSource> {
    let file = std::fs::File::open(path)?;
    read_full_csv(file, schema)
}

pub fn read_full_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<ExperimentalSource> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let map = schema.map_header(&header)?;
    let (yc, ac) = match (map.y, map.a) {
        (Some(y), Some(a)) => (y, a),
        _ => {
            return Err(Error::Validation(format!(
                "header must contain the columns `{}` and `{}`",
                schema.y, schema.a
            )))
        }
    };
    let dims = map.dims();
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        let required = |c: usize, role: Role| -> Result<f64> {
            parse_cell(&rec[c], row, &header[c])?.ok_or_else(|| Error::SchemaViolation {
                row,
                msg: format!("missing value in `{role}`"),
            })
        };
        let y = required(yc, Role::Y)?;
        let a = parse_treatment(required(ac, Role::A)?, row)?;
        records.push(FullRecord {
            y,
            a,
            w: all_present(read_vector(&rec, &map.w, &header, row)?, Role::W, row)?,
            z: all_present(read_vector(&rec, &map.z, &header, row)?, Role::Z, row)?,
            s: all_present(read_vector(&rec, &map.s, &header, row)?, Role::S, row)?,
            x: all_present(read_vector(&rec, &map.x, &header, row)?, Role::X, row)?,
        });
    }
    ExperimentalSource::new(records, dims)
}

pub fn write_full_csv(source: &ExperimentalSource, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record(canonical_header(&source.dims(), false))?;
    for r in source.records() {
        let mut row = vec![if r.a { "1".to_string() } else { "0".to_string() }, r.y.to_string()];
        for v in r.w.iter().chain(&r.z).chain(&r.s).chain(&r.x) {
            row.push(v.to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
