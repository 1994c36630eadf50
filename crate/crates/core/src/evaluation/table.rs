use std::fmt::Write;

use super::EvalReport;
use crate::{Error, Result, NUM_TASKS};

/// Column headings, in report order.
pub const COLUMN_TITLES: [&str; NUM_TASKS + 1] = [
    "Calorie (kcal)",
    "Mass (g)",
    "Protein (g)",
    "Fat (g)",
    "Carb (g)",
    "Combined",
];

const CSV_COLUMNS: [&str; NUM_TASKS + 1] = [
    "calories_kcal",
    "mass_g",
    "protein_g",
    "fat_g",
    "carb_g",
    "combined_mae",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Markdown,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::Argument(format!("unknown table format `{other}`"))),
        }
    }
}

/// Reports plus, per column, which rows hold the minimum.
#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub reports: Vec<EvalReport>,
    /// `best[c][r]` is true when row `r` is minimal in column `c`.
    pub best: Vec<Vec<bool>>,
}

impl ComparisonTable {
    pub fn new(reports: Vec<EvalReport>) -> Self {
        let best = (0..=NUM_TASKS)
            .map(|c| {
                let col: Vec<f64> = reports.iter().map(|r| row_values(r)[c]).collect();
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                col.iter().map(|&v| v == min).collect()
            })
            .collect();
        Self { reports, best }
    }

    pub fn is_best(&self, row: usize, column: usize) -> bool {
        self.best[column][row]
    }

    pub fn render(&self, format: TableFormat) -> String {
        match format {
            TableFormat::Text => self.render_text(),
            TableFormat::Csv => self.render_csv(),
            TableFormat::Markdown => self.render_markdown(),
        }
    }

    fn render_text(&self) -> String {
        let label_w = self
            .reports
            .iter()
            .map(|r| r.model_label.chars().count())
            .chain(std::iter::once(5))
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = write!(out, "{:<label_w$}", "Model");
        for t in COLUMN_TITLES {
            let _ = write!(out, "  {t:>15}");
        }
        out.push('\n');
        for (r, report) in self.reports.iter().enumerate() {
            let _ = write!(out, "{:<label_w$}", report.model_label);
            for (c, v) in row_values(report).iter().enumerate() {
                let mark = if self.is_best(r, c) { "*" } else { " " };
                let _ = write!(out, "  {:>14}{mark}", format!("{v:.1}"));
            }
            out.push('\n');
        }
        out.push_str("* best (lowest) in column\n");
        out
    }

    fn render_markdown(&self) -> String {
        let mut out = String::from("| Model |");
        for t in COLUMN_TITLES {
            let _ = write!(out, " {t} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(COLUMN_TITLES.len()));
        out.push('\n');
        for (r, report) in self.reports.iter().enumerate() {
            let _ = write!(out, "| {} |", report.model_label.replace('|', "\\|"));
            for (c, v) in row_values(report).iter().enumerate() {
                if self.is_best(r, c) {
                    let _ = write!(out, " **{v:.1}** |");
                } else {
                    let _ = write!(out, " {v:.1} |");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Full-precision values; `best_columns` lists the columns where the
    /// row is minimal, separated by `;`.
    fn render_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header = vec!["model"];
        header.extend(CSV_COLUMNS);
        header.push("best_columns");
        w.write_record(&header).expect("writing to memory");
        for (r, report) in self.reports.iter().enumerate() {
            let values = row_values(report);
            let mut row = vec![report.model_label.clone()];
            row.extend(values.iter().map(|v| format!("{v}")));
            let best: Vec<&str> = (0..values.len())
                .filter(|&c| self.is_best(r, c))
                .map(|c| CSV_COLUMNS[c])
                .collect();
            row.push(best.join(";"));
            w.write_record(&row).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 csv")
    }
}

fn row_values(r: &EvalReport) -> [f64; NUM_TASKS + 1] {
    let t = r.per_task();
    [t[0], t[1], t[2], t[3], t[4], r.combined_mae]
}

/// Renders reports as a table with column minima marked.
pub fn render_table(reports: &[EvalReport], format: TableFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Argument("no reports to render".to_string()));
    }
    Ok(ComparisonTable::new(reports.to_vec()).render(format))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(label: &str, v: [f64; 5]) -> EvalReport {
        EvalReport::new(label, v, 10).unwrap()
    }

    #[test]
    fn singleton_all_best() {
        let t = ComparisonTable::new(vec![report("only", [1.0, 2.0, 3.0, 4.0, 5.0])]);
        assert!((0..6).all(|c| t.is_best(0, c)));
        let md = t.render(TableFormat::Markdown);
        assert_eq!(md.matches("**").count(), 12, "{md}");
    }

    #[test]
    fn csv_round_trip() {
        let reports = vec![
            report("a", [1.25, 2.0, 3.0, 4.0, 5.0]),
            report("b", [0.5, 9.0, 3.0, 1.0, 5.5]),
        ];
        let text = render_table(&reports, TableFormat::Csv).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for (rec, rep) in rdr.records().zip(&reports) {
            let rec = rec.unwrap();
            assert_eq!(&rec[0], rep.model_label);
            for (k, want) in rep.per_task().iter().enumerate() {
                assert_eq!(rec[k + 1].parse::<f64>().unwrap(), *want);
            }
            assert_eq!(rec[6].parse::<f64>().unwrap(), rep.combined_mae);
        }
        assert!(text.contains("calories_kcal;protein_g;fat_g"), "{text}");
    }

    #[test]
    fn text_has_one_decimal() {
        let text = render_table(&[report("m", [253.71, 98.44, 22.1, 14.3, 24.2])], TableFormat::Text).unwrap();
        assert!(text.contains("253.7*"), "{text}");
        assert!(text.contains("412.8*"), "{text}");
        assert!(render_table(&[], TableFormat::Text).is_err());
    }

    proptest! {
        #[test]
        fn marks_are_column_minima(
            rows in proptest::collection::vec(proptest::array::uniform5(0.0f64..1000.0), 1..12)
        ) {
            let reports: Vec<EvalReport> = rows.iter().enumerate()
                .map(|(i, v)| report(&format!("r{i}"), *v)).collect();
            let t = ComparisonTable::new(reports.clone());
            for c in 0..6 {
                let col: Vec<f64> = reports.iter().map(|r| row_values(r)[c]).collect();
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                prop_assert!(t.best[c].iter().any(|&b| b));
                for (r, &v) in col.iter().enumerate() {
                    prop_assert_eq!(t.is_best(r, c), v == min);
                }
            }
        }
    }
}
