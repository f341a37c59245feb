use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probkit::Interval;
use crate::psmodel::PrincipalStratum;

/// Sample quantile by linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and nonempty.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn pce_column_name(u: PrincipalStratum) -> String {
    format!("pce({},{})", u.s0, u.s1)
}

/// Retained draws, one row per kept iteration, with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub columns: Vec<String>,
    /// Row-major, `n_draws × columns.len()`.
    pub values: Vec<f64>,
    /// MH acceptance rate per updated quantity, over all iterations.
    pub acceptance: BTreeMap<String, f64>,
    /// Lower truncation point applied to `sigma_y2`; 0 when none.
    pub sigma_y2_floor: f64,
    /// Effective settings, echoed into the summary.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub n_draws: usize,
    pub columns: Vec<ColumnSummary>,
    pub acceptance: BTreeMap<String, f64>,
    pub sigma_y2_floor: f64,
    pub fraction_at_floor: f64,
    pub config: serde_json::Value,
}

impl PosteriorDraws {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            values: vec![],
            acceptance: BTreeMap::new(),
            sigma_y2_floor: 0.0,
            config: serde_json::Value::Null,
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.values.extend_from_slice(row);
    }

    pub fn n_draws(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.values.len() / self.columns.len()
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::InvalidParameter(format!("no draw column `{name}`")))?;
        let w = self.columns.len();
        Ok(self.values.iter().skip(j).step_by(w).copied().collect())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.columns.len();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn mean(&self, name: &str) -> Result<f64> {
        let c = self.column(name)?;
        Ok(mean(&c))
    }

    pub fn sd(&self, name: &str) -> Result<f64> {
        let c = self.column(name)?;
        Ok(sd(&c))
    }

    /// Equal-tailed 95% credible interval.
    pub fn ci95(&self, name: &str) -> Result<Interval> {
        let mut c = self.column(name)?;
        if c.is_empty() {
            return Err(Error::InvalidParameter("no retained draws".into()));
        }
        c.sort_by(f64::total_cmp);
        Ok(Interval::new(quantile_type7(&c, 0.025), quantile_type7(&c, 0.975)))
    }

    /// Share of retained `sigma_y2` draws within 1% of the floor.
    pub fn fraction_at_floor(&self) -> f64 {
        match self.column("sigma_y2") {
            Ok(c) if !c.is_empty() && self.sigma_y2_floor > 0.0 => {
                let cut = self.sigma_y2_floor * 1.01;
                c.iter().filter(|&&v| v <= cut).count() as f64 / c.len() as f64
            }
            _ => 0.0,
        }
    }

    pub fn summary(&self) -> DrawSummary {
        let columns = self
            .columns
            .iter()
            .map(|name| {
                let mut c = self.column(name).expect("own column");
                let (m, s) = (mean(&c), sd(&c));
                c.sort_by(f64::total_cmp);
                let (q025, q975) = if c.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    (quantile_type7(&c, 0.025), quantile_type7(&c, 0.975))
                };
                ColumnSummary { name: name.clone(), mean: m, sd: s, q025, q975 }
            })
            .collect();
        DrawSummary {
            n_draws: self.n_draws(),
            columns,
            acceptance: self.acceptance.clone(),
            sigma_y2_floor: self.sigma_y2_floor,
            fraction_at_floor: self.fraction_at_floor(),
            config: self.config.clone(),
        }
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.columns)?;
        for i in 0..self.n_draws() {
            wtr.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref())?;
        self.to_writer(std::io::BufWriter::new(f))
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref())?;
        let mut w = std::io::BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, &self.summary())?;
        writeln!(w)?;
        Ok(())
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_matches_reference_values() {
        // R: quantile(1:10, c(0.025, 0.5, 0.975)) = 1.225, 5.5, 9.775
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((quantile_type7(&xs, 0.025) - 1.225).abs() < 1e-12);
        assert!((quantile_type7(&xs, 0.5) - 5.5).abs() < 1e-12);
        assert!((quantile_type7(&xs, 0.975) - 9.775).abs() < 1e-12);
        assert_eq!(quantile_type7(&[4.0], 0.3), 4.0);
    }

    #[test]
    fn columns_and_csv() {
        let mut d = PosteriorDraws::new(vec!["a".into(), "b".into()]);
        d.push_row(&[1.0, 10.0]);
        d.push_row(&[3.0, 30.0]);
        assert_eq!(d.n_draws(), 2);
        assert_eq!(d.column("b").unwrap(), vec![10.0, 30.0]);
        assert_eq!(d.mean("a").unwrap(), 2.0);
        assert!(d.column("c").is_err());
        let mut buf = vec![];
        d.to_writer(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,10\n3,30\n");
    }

    #[test]
    fn pce_names() {
        assert_eq!(pce_column_name(PrincipalStratum::new(0.89, 0.35)), "pce(0.89,0.35)");
    }
}
