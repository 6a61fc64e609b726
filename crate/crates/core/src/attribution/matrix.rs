use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExplainerConfig;
use crate::dataset::{read_json, write_json};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const SHAP_FORMAT: &str = "balshap-shap";
pub const SHAP_VERSION: u32 = 1;

/// Attributions of an explanation set, one row per observation in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapMatrix {
    pub phi: Matrix,
    pub base_value: f64,
    /// Model output for each explained row.
    pub fx: Vec<f64>,
    pub feature_names: Vec<String>,
    pub config: ExplainerConfig,
}

#[derive(Serialize, Deserialize)]
struct ShapFile {
    format: String,
    version: u32,
    config: ExplainerConfig,
    feature_names: Vec<String>,
    base_value: f64,
    f_x: Vec<f64>,
    phi: Vec<Vec<f64>>,
}

impl ShapMatrix {
    pub fn n(&self) -> usize {
        self.phi.rows()
    }

    pub fn d(&self) -> usize {
        self.phi.cols()
    }

    /// Largest `|sum(phi) + base - f(x)|` over rows.
    pub fn max_efficiency_gap(&self) -> f64 {
        self.phi
            .iter_rows()
            .zip(&self.fx)
            .map(|(r, fx)| (r.iter().sum::<f64>() + self.base_value - fx).abs())
            .fold(0.0, f64::max)
    }

    /// One row per observation: a column per feature, then `base_value` and `f_x`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.extend(["base_value", "f_x"]);
        w.write_record(&header)?;
        for (row, fx) in self.phi.iter_rows().zip(&self.fx) {
            let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
            rec.push(self.base_value.to_string());
            rec.push(fx.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = ShapFile {
            format: SHAP_FORMAT.into(),
            version: SHAP_VERSION,
            config: self.config.clone(),
            feature_names: self.feature_names.clone(),
            base_value: self.base_value,
            f_x: self.fx.clone(),
            phi: self.phi.iter_rows().map(<[f64]>::to_vec).collect(),
        };
        write_json(path, &file)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let f: ShapFile = read_json(path)?;
        if f.format != SHAP_FORMAT || f.version != SHAP_VERSION {
            return Err(Error::Unsupported(format!(
                "attribution file format {:?} v{}",
                f.format, f.version
            )));
        }
        let phi = if f.phi.is_empty() {
            Matrix::zeros(0, f.feature_names.len())
        } else {
            Matrix::from_rows(&f.phi)?
        };
        if phi.cols() != f.feature_names.len() || f.f_x.len() != phi.rows() {
            return Err(Error::config("attribution file has inconsistent shapes"));
        }
        Ok(Self {
            phi,
            base_value: f.base_value,
            fx: f.f_x,
            feature_names: f.feature_names,
            config: f.config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::Method;

    #[test]
    fn json_round_trip_and_csv_layout() {
        let m = ShapMatrix {
            phi: Matrix::from_rows(&[[0.1, -0.2], [1.0 / 3.0, 0.0]]).unwrap(),
            base_value: 0.25,
            fx: vec![0.15, 0.5833333333333334],
            feature_names: vec!["a".into(), "b".into()],
            config: ExplainerConfig::new(Method::Kernel),
        };
        let dir = tempfile::tempdir().unwrap();
        m.write_json(&dir.path().join("s.json")).unwrap();
        assert_eq!(ShapMatrix::read_json(&dir.path().join("s.json")).unwrap(), m);
        m.write_csv(&dir.path().join("s.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "a,b,base_value,f_x");
        assert_eq!(lines[1], "0.1,-0.2,0.25,0.15");
        assert_eq!(lines.len(), 3);
    }
}
