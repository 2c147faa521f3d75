//! Plot-ready CSV series.
//!
//! Every file starts with one header row naming the columns of its schema.
//! Floats are written in the shortest form that parses back to the same
//! bits; missing values are empty cells; lines end in LF.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::analysis::{EnergyRecord, FlatSupRecord, HierarchyLine, SupKind, SupNormRecord};

pub const SERIES_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Energy,
    Sup,
    Hierarchy,
    FlatSup,
    KgMargin,
    WaveMargin,
    Sobolev,
    Frame,
    Residual,
    Drift,
}

impl Schema {
    pub fn id(&self) -> &'static str {
        match self {
            Schema::Energy => "energy",
            Schema::Sup => "sup",
            Schema::Hierarchy => "hierarchy",
            Schema::FlatSup => "flat-sup",
            Schema::KgMargin => "kg-margin",
            Schema::WaveMargin => "wave-margin",
            Schema::Sobolev => "sobolev",
            Schema::Frame => "frame",
            Schema::Residual => "residual",
            Schema::Drift => "drift",
        }
    }

    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            Schema::Energy => &["field", "it", "ir", "k", "s", "value"],
            Schema::Sup => &["field", "it", "ir", "k", "kind", "p", "q", "s", "value"],
            Schema::Hierarchy => &["line", "target", "fitted", "width", "pass", "c1_needed", "members"],
            Schema::FlatSup => &["run", "t", "sup_u", "sup_v", "r_u"],
            Schema::KgMargin => &["amplitude", "dx", "c_weight", "s", "max_ratio", "rapidity", "samples"],
            Schema::WaveMargin => &["mu", "nu", "dx", "t", "max_ratio", "r_at", "sup_u"],
            Schema::Sobolev => &["member", "s", "ratio"],
            Schema::Frame => &["field", "dx", "max_discrepancy", "nodes"],
            Schema::Residual => &["dx", "max_u", "max_v", "l2_u", "l2_v"],
            Schema::Drift => &["dx", "s", "energy", "relative_drift"],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format_float(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<u32> for Cell {
    fn from(i: u32) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

/// Shortest decimal that parses back to `x` exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

pub trait ToRow {
    fn row(&self) -> Vec<Cell>;
}

impl ToRow for Vec<Cell> {
    fn row(&self) -> Vec<Cell> {
        self.clone()
    }
}

impl ToRow for EnergyRecord {
    fn row(&self) -> Vec<Cell> {
        let i = self.index;
        vec![self.field.name().into(), i.it.into(), i.ir.into(), i.k.into(), self.s.into(), self.value.into()]
    }
}

impl ToRow for SupNormRecord {
    fn row(&self) -> Vec<Cell> {
        let i = self.index;
        let kind = match self.kind {
            SupKind::Value => "value",
            SupKind::Perp => "perp",
            SupKind::ValuePlusPerp => "value+perp",
        };
        vec![
            self.field.name().into(),
            i.it.into(),
            i.ir.into(),
            i.k.into(),
            kind.into(),
            self.p.into(),
            self.q.into(),
            self.s.into(),
            self.value.into(),
        ]
    }
}

impl ToRow for HierarchyLine {
    fn row(&self) -> Vec<Cell> {
        vec![
            self.id.as_str().into(),
            self.target.into(),
            self.fitted.into(),
            self.width.into(),
            self.pass.into(),
            self.c1_needed.into(),
            self.members.into(),
        ]
    }
}

/// Flat sup record tagged with its run name.
impl ToRow for (&str, FlatSupRecord) {
    fn row(&self) -> Vec<Cell> {
        let r = &self.1;
        vec![self.0.into(), r.t.into(), r.sup_u.into(), r.sup_v.into(), r.r_u.into()]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: row {row} has {got} cells, schema {schema} has {want} columns")]
    Shape { path: PathBuf, schema: &'static str, row: usize, got: usize, want: usize },
}

/// Writes `records` under `schema` to `path`, header first.
pub fn emit_series<R: ToRow>(records: &[R], schema: Schema, path: &Path) -> Result<(), EmitError> {
    let want = schema.columns().len();
    let rows: Vec<Vec<Cell>> = records.iter().map(|r| r.row()).collect();
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != want) {
        return Err(EmitError::Shape { path: path.into(), schema: schema.id(), row, got: r.len(), want });
    }
    let io = |source| EmitError::Io { path: path.into(), source };
    let file = File::create(path).map_err(io)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| io(e.into());
    w.write_record(schema.columns()).map_err(csv_err)?;
    for r in &rows {
        w.write_record(r.iter().map(Cell::render)).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| io(e.into_error()))?.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{FieldId, MultiIndex};
    use proptest::prelude::*;

    fn read(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
        let mut r = csv::Reader::from_path(path).unwrap();
        let head = r.headers().unwrap().iter().map(String::from).collect();
        let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
        (head, rows)
    }

    #[test]
    fn empty_set_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        emit_series::<EnergyRecord>(&[], Schema::Energy, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "field,it,ir,k,s,value\n");
    }

    #[test]
    fn energy_table_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let rec = EnergyRecord { field: FieldId::V, index: MultiIndex::new(1, 0, 2), s: 12.5, value: 3.0e-7 };
        emit_series(&[rec], Schema::Energy, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "field,it,ir,k,s,value\nv,1,0,2,12.5,3e-7\n");
    }

    #[test]
    fn mismatched_rows_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let err = emit_series(&[vec![Cell::Float(1.0)]], Schema::Drift, &p).unwrap_err();
        assert!(matches!(err, EmitError::Shape { got: 1, want: 4, .. }));
        let err = emit_series(&[vec![Cell::Float(1.0); 4]], Schema::Drift, Path::new("/nonexistent/dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.csv"));
    }

    proptest! {
        #[test]
        fn floats_round_trip_bit_exactly(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("d.csv");
            emit_series(&[vec![Cell::Float(x), Cell::Float(-x), Cell::Empty, Cell::Float(x * 0.5)]], Schema::Drift, &p).unwrap();
            let (_, rows) = read(&p);
            let back: f64 = rows[0][0].parse().unwrap();
            prop_assert!(back.to_bits() == x.to_bits() || (x.is_nan() && back.is_nan()));
            let half: f64 = rows[0][3].parse().unwrap();
            prop_assert!(half.to_bits() == (x * 0.5).to_bits() || half.is_nan());
            prop_assert_eq!(&rows[0][2], "");
        }
    }
}
