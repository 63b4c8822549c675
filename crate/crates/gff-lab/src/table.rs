//! Small column tables written as CSV and as plot-ready text.

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    /// What the column measures; goes into plot-file headers.
    pub about: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[(&str, &str)]) -> Self {
        Table {
            columns: columns
                .iter()
                .map(|(n, a)| Column {
                    name: n.to_string(),
                    about: a.to_string(),
                })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self
            .columns
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Numeric column by name.
    pub fn column_f64(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.position(name)?;
        self.rows.iter().map(|r| r[k].parse().ok()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Value against distance or separation.
    Profile,
    /// Value against lattice size.
    Scaling,
    Histogram,
}

impl PlotKind {
    pub fn required(self) -> &'static [&'static str] {
        match self {
            PlotKind::Profile => &["x", "value"],
            PlotKind::Scaling => &["n", "value"],
            PlotKind::Histogram => &["bin_lo", "bin_hi", "count"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Profile => "profile",
            PlotKind::Scaling => "scaling",
            PlotKind::Histogram => "histogram",
        }
    }
}

/// Whitespace-separated columns, required ones first, with a comment header
/// naming the observable behind each column.
pub fn emit_plotdata(table: &Table, kind: PlotKind, title: &str) -> Result<String> {
    let missing: Vec<String> = kind
        .required()
        .iter()
        .filter(|c| table.position(c).is_none())
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(LabError::MissingColumns(missing));
    }
    let mut order: Vec<usize> = kind
        .required()
        .iter()
        .map(|c| table.position(c).unwrap())
        .collect();
    let rest: Vec<usize> = (0..table.columns.len())
        .filter(|k| !order.contains(k))
        .collect();
    order.extend(rest);
    let mut out = format!("# {title}\n# kind: {}\n", kind.name());
    for (i, &k) in order.iter().enumerate() {
        let c = &table.columns[k];
        out.push_str(&format!("# column {}: {} = {}\n", i + 1, c.name, c.about));
    }
    for r in &table.rows {
        out.push_str(
            &order
                .iter()
                .map(|&k| r[k].as_str())
                .collect::<Vec<_>>()
                .join(" "),
        );
        out.push('\n');
    }
    Ok(out)
}

/// Histogram of `values` over `bins` equal bins spanning their range.
pub fn histogram(values: &[f64], bins: usize, about: &str) -> Table {
    let mut t = Table::new(&[
        ("bin_lo", "lower bin edge"),
        ("bin_hi", "upper bin edge"),
        ("count", about),
    ]);
    if values.is_empty() || bins == 0 {
        return t;
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    for (k, c) in counts.iter().enumerate() {
        let a = lo + k as f64 * width;
        t.push(vec![a.to_string(), (a + width).to_string(), c.to_string()]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_header_and_order() {
        let mut t = Table::new(&[
            ("se", "standard error"),
            ("n", "lattice size"),
            ("value", "mean |phi(0)| / log n"),
        ]);
        t.push(vec!["0.1".into(), "16".into(), "1.5".into()]);
        let s = emit_plotdata(&t, PlotKind::Scaling, "repulsion").unwrap();
        assert!(s.contains("# column 1: n = lattice size"));
        assert!(s.ends_with("16 1.5 0.1\n"));
        match emit_plotdata(&t, PlotKind::Histogram, "x") {
            Err(LabError::MissingColumns(c)) => assert_eq!(c, vec!["bin_lo", "bin_hi", "count"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..100).map(|k| k as f64 * 0.37).collect();
        let h = histogram(&v, 7, "draws");
        let total: f64 = h.column_f64("count").unwrap().iter().sum();
        assert_eq!(total, 100.0);
    }
}
