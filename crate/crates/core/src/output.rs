//! CSV tables with a fixed float format, so identical inputs give identical
//! bytes on every platform.

use std::fs::File;
use std::path::Path;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
}

impl Cell {
    /// Floats use 17 significant digits in exponent form.
    pub fn render(&self) -> String {
        match *self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "ragged row");
        self.rows.push(row);
    }
}

pub fn write_csv<W: std::io::Write>(table: &Table, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    write_csv(table, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(t: &Table) -> String {
        let mut buf = Vec::new();
        write_csv(t, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn header_only() {
        assert_eq!(render(&Table::new(["t", "x"])), "t,x\n");
    }

    #[test]
    fn half_full_precision() {
        let mut t = Table::new(["v"]);
        t.push(vec![0.5.into()]);
        assert_eq!(render(&t), "v\n5.0000000000000000e-1\n");
    }

    #[test]
    fn floats_round_trip_exactly() {
        let v = 0.1 + 0.2;
        let s = Cell::Float(v).render();
        assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn file_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let mut t = Table::new(["n", "x"]);
        t.push(vec![3usize.into(), 1.0.into()]);
        emit_csv(&t, &path).unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "n,x\n3,1.0000000000000000e0\n");
    }
}
