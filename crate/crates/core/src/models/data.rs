use serde::Deserialize;

use crate::error::{Error, Result};

/// Named numeric columns of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut ds = Dataset::default();
        for (name, col) in columns {
            if let Some(first) = ds.columns.first() {
                if col.len() != first.len() {
                    return Err(Error::Data(format!(
                        "column '{name}' has {} rows, expected {}",
                        col.len(),
                        first.len()
                    )));
                }
            }
            if ds.names.contains(&name) {
                return Err(Error::Data(format!("duplicate column '{name}'")));
            }
            ds.names.push(name);
            ds.columns.push(col);
        }
        Ok(ds)
    }

    /// Parses a header-first CSV of numbers.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Data(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if names.is_empty() || names.iter().any(String::is_empty) {
            return Err(Error::Data("missing or empty header".into()));
        }
        let mut columns = vec![Vec::new(); names.len()];
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Data(e.to_string()))?;
            if record.len() < names.len() {
                return Err(Error::Data(format!(
                    "column '{}' is short at data row {}",
                    names[record.len()],
                    line + 1
                )));
            }
            if record.len() > names.len() {
                return Err(Error::Data(format!("data row {} has extra fields", line + 1)));
            }
            for ((field, col), name) in record.iter().zip(&mut columns).zip(&names) {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!("column '{name}', data row {}: '{field}' is not a number", line + 1))
                })?;
                col.push(v);
            }
        }
        Dataset::new(names.into_iter().zip(columns).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::Data(format!("missing column '{name}'")))
    }

    /// Fails naming the first absent column.
    pub fn require(&self, names: &[&str]) -> Result<()> {
        names.iter().try_for_each(|n| self.column(n).map(|_| ()))
    }
}

/// The hierarchical-model file layout: `{"y": [...], "sigma": [...]}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EightSchoolsData {
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl EightSchoolsData {
    pub fn from_json_str(text: &str) -> Result<Dataset> {
        let raw: EightSchoolsData = serde_json::from_str(text).map_err(|e| Error::Data(e.to_string()))?;
        Dataset::new(vec![("y".into(), raw.y), ("sigma".into(), raw.sigma)])
    }
}

/// Data files shipped with the crate.
pub mod bundled {
    use super::*;

    macro_rules! bundle {
        ($name:literal) => {
            include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/v1/", $name))
        };
    }

    pub const VERSION: &str = "v1";

    /// `(file name, contents)` for every bundled file, checksums included.
    pub const FILES: [(&str, &str); 7] = [
        ("bernoulli.csv", bundle!("bernoulli.csv")),
        ("cauchy.csv", bundle!("cauchy.csv")),
        ("toy_linreg.csv", bundle!("toy_linreg.csv")),
        ("bnn_regression.csv", bundle!("bnn_regression.csv")),
        ("eight_schools.json", bundle!("eight_schools.json")),
        ("diamonds.csv", bundle!("diamonds.csv")),
        ("SHA256SUMS", bundle!("SHA256SUMS")),
    ];

    pub fn text(file: &str) -> Option<&'static str> {
        FILES.iter().find(|(n, _)| *n == file).map(|(_, t)| *t)
    }

    fn csv(file: &str) -> Dataset {
        Dataset::from_csv_str(text(file).expect("bundled file")).expect("bundled data parses")
    }

    pub fn bernoulli() -> Dataset {
        csv("bernoulli.csv")
    }

    pub fn cauchy() -> Dataset {
        csv("cauchy.csv")
    }

    pub fn toy_linreg() -> Dataset {
        csv("toy_linreg.csv")
    }

    pub fn bnn_regression() -> Dataset {
        csv("bnn_regression.csv")
    }

    pub fn eight_schools() -> Dataset {
        EightSchoolsData::from_json_str(text("eight_schools.json").expect("bundled file")).expect("bundled data parses")
    }

    pub fn diamonds() -> Dataset {
        csv("diamonds.csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_row_names_the_column() {
        let err = Dataset::from_csv_str("a,b\n1,2\n3\n").unwrap_err();
        assert!(err.to_string().contains("'b'"), "{err}");
    }

    #[test]
    fn bundled_shapes() {
        assert_eq!(bundled::cauchy().column("y").unwrap()[0], 1.2083935);
        let toy = bundled::toy_linreg();
        assert_eq!(toy.n_rows(), 6);
        assert_eq!(toy.column("x1").unwrap()[0], 1.3709584);
        assert_eq!(bundled::bnn_regression().n_rows(), 9);
        assert_eq!(bundled::eight_schools().n_rows(), 8);
        let d = bundled::diamonds();
        assert_eq!((d.n_rows(), d.names().len()), (5000, 25));
    }

    #[test]
    fn mismatched_json_lengths() {
        assert!(EightSchoolsData::from_json_str(r#"{"y":[1,2],"sigma":[1]}"#).is_err());
    }
}
