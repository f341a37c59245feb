use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::JointParams;
use crate::error::{Error, Result};

/// Covariate effects removed by [`residualize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateFit {
    pub names: Vec<String>,
    /// Per-arm least-squares coefficients of `Y` on `X`.
    pub gamma_arm: [Vec<f64>; 2],
    /// Pooled least-squares coefficients of `S` on `X` with arm intercepts.
    pub alpha: Vec<f64>,
}

/// Rows of `(y, t, s, x…)`, optionally with the simulated strata `s0`, `s1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub t: Vec<u8>,
    pub s: Vec<f64>,
    /// `n × p` covariates; `p` may be zero.
    pub x: DMatrix<f64>,
    pub x_names: Vec<String>,
    pub s0: Option<Vec<f64>>,
    pub s1: Option<Vec<f64>>,
    pub covariate_fit: Option<CovariateFit>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, t: Vec<u8>, s: Vec<f64>) -> Result<Self> {
        let n = y.len();
        let d = Self {
            y,
            t,
            s,
            x: DMatrix::zeros(n, 0),
            x_names: vec![],
            s0: None,
            s1: None,
            covariate_fit: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.t.len() != n || self.s.len() != n || self.x.nrows() != n {
            return Err(Error::Data(format!(
                "column lengths differ: y={}, t={}, s={}, x rows={}",
                n,
                self.t.len(),
                self.s.len(),
                self.x.nrows()
            )));
        }
        if self.x_names.len() != self.p() {
            return Err(Error::Data("covariate names do not match columns".into()));
        }
        if let Some(bad) = self.t.iter().position(|&v| v > 1) {
            return Err(Error::Data(format!("row {}: t must be 0 or 1", bad + 1)));
        }
        for (name, col) in [("s0", &self.s0), ("s1", &self.s1)] {
            if let Some(c) = col {
                if c.len() != n {
                    return Err(Error::Data(format!("column {name} has length {}", c.len())));
                }
            }
        }
        let finite = self.y.iter().chain(&self.s).all(|v| v.is_finite())
            && self.x.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Data("non-finite value in y, s or x".into()));
        }
        Ok(())
    }

    /// Errors unless both arms have at least `min` rows.
    pub fn require_arms(&self, min: usize) -> Result<()> {
        let counts = self.arm_counts();
        for t in 0..2 {
            if counts[t] < min {
                return Err(Error::Data(format!(
                    "arm t={t} has {} rows, need at least {min}",
                    counts[t]
                )));
            }
        }
        Ok(())
    }

    pub fn arm_counts(&self) -> [usize; 2] {
        let n1 = self.t.iter().filter(|&&v| v == 1).count();
        [self.n() - n1, n1]
    }

    pub fn arm_indices(&self, arm: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.t[i] == arm).collect()
    }

    /// True when every observed intermediate is 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.s.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn has_truth(&self) -> bool {
        self.s0.is_some() && self.s1.is_some()
    }

    pub fn x_row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(f)
    }

    /// Parses the dataset schema: headers `y`, `t`, `s`, `x1…xp`, optional
    /// `s0`, `s1`, in any order.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut idx = ColumnIndex::default();
        let mut x_cols: Vec<(usize, usize, String)> = vec![];
        for (j, h) in headers.iter().enumerate() {
            let slot = match h {
                "y" => &mut idx.y,
                "t" => &mut idx.t,
                "s" => &mut idx.s,
                "s0" => &mut idx.s0,
                "s1" => &mut idx.s1,
                _ => {
                    let k = h
                        .strip_prefix('x')
                        .and_then(|d| d.parse::<usize>().ok())
                        .filter(|&k| k >= 1)
                        .ok_or_else(|| {
                            Error::Data(format!(
                                "unknown column `{h}`; expected y, t, s, x1..xp, s0, s1"
                            ))
                        })?;
                    x_cols.push((k, j, h.to_string()));
                    continue;
                }
            };
            if slot.replace(j).is_some() {
                return Err(Error::Data(format!("duplicate column `{h}`")));
            }
        }
        for (name, col) in [("y", idx.y), ("t", idx.t), ("s", idx.s)] {
            if col.is_none() {
                return Err(Error::Data(format!("missing required column `{name}`")));
            }
        }
        x_cols.sort();
        for (pos, (k, _, name)) in x_cols.iter().enumerate() {
            if *k != pos + 1 {
                return Err(Error::Data(format!(
                    "covariate columns must be x1..xp without gaps; found `{name}`"
                )));
            }
        }
        let p = x_cols.len();
        let (mut y, mut t, mut s) = (vec![], vec![], vec![]);
        let (mut s0, mut s1) = (vec![], vec![]);
        let mut xs: Vec<f64> = vec![];
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = r + 2;
            let get = |j: usize, name: &str| -> Result<f64> {
                let raw = rec.get(j).unwrap_or("");
                raw.parse::<f64>().map_err(|_| {
                    Error::Data(format!("row {row}, column `{name}`: cannot parse `{raw}`"))
                })
            };
            y.push(get(idx.y.unwrap(), "y")?);
            let tv = get(idx.t.unwrap(), "t")?;
            if tv != 0.0 && tv != 1.0 {
                return Err(Error::Data(format!("row {row}, column `t`: must be 0 or 1")));
            }
            t.push(tv as u8);
            s.push(get(idx.s.unwrap(), "s")?);
            if let Some(j) = idx.s0 {
                s0.push(get(j, "s0")?);
            }
            if let Some(j) = idx.s1 {
                s1.push(get(j, "s1")?);
            }
            for (_, j, name) in &x_cols {
                xs.push(get(*j, name)?);
            }
        }
        let n = y.len();
        let d = Dataset {
            y,
            t,
            s,
            x: DMatrix::from_row_slice(n, p, &xs),
            x_names: x_cols.into_iter().map(|(_, _, name)| name).collect(),
            s0: idx.s0.map(|_| s0),
            s1: idx.s1.map(|_| s1),
            covariate_fit: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref())?;
        self.to_writer(std::io::BufWriter::new(f))
    }

    /// Writes columns `y, t, s, x1…xp, s0, s1` using shortest round-trip floats.
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = vec!["y".into(), "t".into(), "s".into()];
        header.extend(self.x_names.iter().cloned());
        if self.s0.is_some() {
            header.push("s0".into());
        }
        if self.s1.is_some() {
            header.push("s1".into());
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![
                self.y[i].to_string(),
                self.t[i].to_string(),
                self.s[i].to_string(),
            ];
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            if let Some(c) = &self.s0 {
                rec.push(c[i].to_string());
            }
            if let Some(c) = &self.s1 {
                rec.push(c[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Default)]
struct ColumnIndex {
    y: Option<usize>,
    t: Option<usize>,
    s: Option<usize>,
    s0: Option<usize>,
    s1: Option<usize>,
}

/// Draws `n` units from the joint model with `T ~ Bernoulli(0.5)`.
///
/// `covariates`, when given, must have `n` rows and one column per entry of
/// `params.gamma`.
pub fn simulate<R: Rng + ?Sized>(
    params: &JointParams,
    n: usize,
    covariates: Option<DMatrix<f64>>,
    rng: &mut R,
) -> Result<Dataset> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let p = params.n_covariates();
    let x = match covariates {
        Some(x) => {
            if x.nrows() != n || x.ncols() != p {
                return Err(Error::InvalidParameter(format!(
                    "covariates are {}x{}, expected {n}x{p}",
                    x.nrows(),
                    x.ncols()
                )));
            }
            x
        }
        None if p == 0 => DMatrix::zeros(n, 0),
        None => {
            return Err(Error::InvalidParameter(format!(
                "params have {p} covariate coefficients but no covariates were supplied"
            )))
        }
    };
    let [sd0, sd1] = params.sigma_s;
    let r = params.rho;
    let r_c = (1.0 - r * r).sqrt();
    let sy = params.sigma_y2.sqrt();
    let (mut y, mut t, mut s) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut s0, mut s1) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let (ax, gx) = (0..p).fold((0.0, 0.0), |(a, g), k| {
            (a + params.alpha[k] * x[(i, k)], g + params.gamma[k] * x[(i, k)])
        });
        let arm = u8::from(rng.random::<f64>() < 0.5);
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let u0 = params.phi[0] + ax + sd0 * z0;
        let u1 = params.phi[1] + ax + sd1 * (r * z0 + r_c * z1);
        let b = params.beta[arm as usize];
        y.push(params.lambda[arm as usize] + b[0] * u0 + b[1] * u1 + gx + sy * e);
        s.push(if arm == 1 { u1 } else { u0 });
        t.push(arm);
        s0.push(u0);
        s1.push(u1);
    }
    Ok(Dataset {
        y,
        t,
        s,
        x,
        x_names: (1..=p).map(|k| format!("x{k}")).collect(),
        s0: Some(s0),
        s1: Some(s1),
        covariate_fit: None,
    })
}

/// Least-squares coefficients of `target` on `design`, or the names of the
/// columns that are linear combinations of earlier ones.
pub(crate) fn least_squares(
    design: &DMatrix<f64>,
    names: &[String],
    target: &DVector<f64>,
) -> Result<DVector<f64>> {
    // sequential Gram-Schmidt flags columns that add no new direction
    let mut basis: Vec<DVector<f64>> = vec![];
    let mut collinear = vec![];
    for j in 0..design.ncols() {
        let col = design.column(j).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        for q in &basis {
            let c = q.dot(&r);
            r -= q * c;
        }
        if norm == 0.0 || r.norm() <= 1e-9 * norm {
            collinear.push(names[j].clone());
        } else {
            let rn = r.norm();
            basis.push(r / rn);
        }
    }
    if !collinear.is_empty() {
        return Err(Error::RankDeficient(collinear));
    }
    let svd = design.clone().svd(true, true);
    svd.solve(target, 1e-12)
        .map_err(|e| Error::Data(format!("least squares failed: {e}")))
}

/// Removes covariate effects: per-arm least squares for `Y` and pooled least
/// squares with arm intercepts for `S`. The returned data has no covariates
/// and records the fitted slopes in `covariate_fit`.
pub fn residualize(data: &Dataset) -> Result<Dataset> {
    data.validate()?;
    let p = data.p();
    if p == 0 {
        return Ok(data.clone());
    }
    let n = data.n();
    for (t, &count) in data.arm_counts().iter().enumerate() {
        if count <= p + 2 {
            return Err(Error::Data(format!(
                "arm t={t} has {count} rows, need more than {} to remove {p} covariates",
                p + 2
            )));
        }
    }
    let mut y_out = data.y.clone();
    let mut gamma_arm: [Vec<f64>; 2] = [vec![], vec![]];
    for arm in 0..2u8 {
        let rows = data.arm_indices(arm);
        let m = rows.len();
        let mut design = DMatrix::zeros(m, p + 1);
        let mut target = DVector::zeros(m);
        for (r, &i) in rows.iter().enumerate() {
            design[(r, 0)] = 1.0;
            for k in 0..p {
                design[(r, k + 1)] = data.x[(i, k)];
            }
            target[r] = data.y[i];
        }
        let mut names = vec!["intercept".to_string()];
        names.extend(data.x_names.iter().cloned());
        let coef = least_squares(&design, &names, &target)?;
        for &i in &rows {
            let fit: f64 = (0..p).map(|k| coef[k + 1] * data.x[(i, k)]).sum();
            y_out[i] -= fit;
        }
        gamma_arm[arm as usize] = coef.iter().skip(1).copied().collect();
    }
    let mut design = DMatrix::zeros(n, p + 2);
    for i in 0..n {
        let arm = data.t[i] as usize;
        design[(i, arm)] = 1.0;
        for k in 0..p {
            design[(i, k + 2)] = data.x[(i, k)];
        }
    }
    let mut names = vec!["arm0".to_string(), "arm1".to_string()];
    names.extend(data.x_names.iter().cloned());
    let coef = least_squares(&design, &names, &DVector::from_column_slice(&data.s))?;
    let alpha: Vec<f64> = coef.iter().skip(2).copied().collect();
    let shift: Vec<f64> = (0..n)
        .map(|i| (0..p).map(|k| alpha[k] * data.x[(i, k)]).sum())
        .collect();
    let s_out: Vec<f64> = data.s.iter().zip(&shift).map(|(s, a)| s - a).collect();
    let strip = |c: &Option<Vec<f64>>| {
        c.as_ref()
            .map(|v| v.iter().zip(&shift).map(|(s, a)| s - a).collect::<Vec<f64>>())
    };
    Ok(Dataset {
        y: y_out,
        t: data.t.clone(),
        s: s_out,
        x: DMatrix::zeros(n, 0),
        x_names: vec![],
        s0: strip(&data.s0),
        s1: strip(&data.s1),
        covariate_fit: Some(CovariateFit {
            names: data.x_names.clone(),
            gamma_arm,
            alpha,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probkit::RngStream;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn table1_strata_moments() {
        let d = simulate(&JointParams::table1_truth(), 100_000, None, &mut RngStream::new(1, 0))
            .unwrap();
        let s1 = d.s1.as_ref().unwrap();
        assert!((mean(s1) - 0.35).abs() < 0.003);
        let r = corr(d.s0.as_ref().unwrap(), s1);
        assert!((r - 0.75).abs() < 0.01);
    }

    #[test]
    fn degenerate_noise() {
        let mut p = JointParams::table1_truth();
        p.beta = [[0.0; 2]; 2];
        p.lambda = [2.5, 2.5];
        p.sigma_y2 = 1e-300;
        let d = simulate(&p, 200, None, &mut RngStream::new(2, 0)).unwrap();
        assert!(d.y.iter().all(|&y| (y - 2.5).abs() < 1e-140));
    }

    #[test]
    fn zero_rows_rejected() {
        assert!(simulate(&JointParams::table1_truth(), 0, None, &mut RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn csv_round_trip_any_column_order() {
        let d = simulate(&JointParams::table1_truth(), 50, None, &mut RngStream::new(3, 0)).unwrap();
        let mut buf = vec![];
        d.to_writer(&mut buf).unwrap();
        let back = Dataset::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back, d);

        let shuffled = "s,t,x1,y\n0.5,1,2.0,3.0\n0.1,0,1.0,2.5\n";
        let e = Dataset::from_reader(shuffled.as_bytes()).unwrap();
        assert_eq!(e.y, vec![3.0, 2.5]);
        assert_eq!(e.x_names, vec!["x1"]);
        assert_eq!(e.x[(1, 0)], 1.0);
    }

    #[test]
    fn unknown_column_is_named() {
        let err = Dataset::from_reader("y,t,s,dose\n1,0,1,2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("dose"), "{err}");
        let err = Dataset::from_reader("y,s\n1,0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`t`"), "{err}");
    }

    fn with_covariates(alpha: f64, gamma: f64, n: usize, seed: u64) -> Dataset {
        let mut p = JointParams::rho_study_truth();
        p.alpha = vec![alpha, -0.5 * alpha];
        p.gamma = vec![gamma, 0.0];
        let mut rng = RngStream::new(seed, 0);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        simulate(&p, n, Some(x), &mut rng).unwrap()
    }

    #[test]
    fn residualize_without_covariates_is_identity() {
        let d = simulate(&JointParams::table1_truth(), 100, None, &mut RngStream::new(4, 0)).unwrap();
        assert_eq!(residualize(&d).unwrap(), d);
    }

    #[test]
    fn residualize_null_effects_keeps_moments() {
        let d = with_covariates(0.0, 0.0, 10_000, 5);
        let r = residualize(&d).unwrap();
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        for arm in 0..2u8 {
            let idx = d.arm_indices(arm);
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let (vy, vy_r) = (var(&pick(&d.y)), var(&pick(&r.y)));
            let (vs, vs_r) = (var(&pick(&d.s)), var(&pick(&r.s)));
            // removing two null regressors shifts variances by O(p/n)
            assert!((vy_r / vy - 1.0).abs() < 0.01);
            assert!((vs_r / vs - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn residualized_intermediate_is_orthogonal_to_covariates() {
        let d = with_covariates(0.8, 0.4, 5_000, 6);
        let r = residualize(&d).unwrap();
        for k in 0..2 {
            let xk: Vec<f64> = d.x.column(k).iter().copied().collect();
            assert!(corr(&r.s, &xk).abs() < 0.03);
        }
        let fit = r.covariate_fit.unwrap();
        assert!((fit.alpha[0] - 0.8).abs() < 0.05);
        // arm-1 slope on x1 is gamma + (beta10 + beta11) alpha
        assert!((fit.gamma_arm[1][0] - (0.4 + 2.4 * 0.8)).abs() < 0.1);
    }

    #[test]
    fn collinear_columns_are_named() {
        let mut d = with_covariates(0.8, 0.4, 200, 7);
        let doubled = d.x.column(0) * 2.0;
        d.x.set_column(1, &doubled);
        match residualize(&d) {
            Err(Error::RankDeficient(cols)) => assert_eq!(cols, vec!["x2".to_string()]),
            other => panic!("expected rank error, got {other:?}"),
        }
    }
}
