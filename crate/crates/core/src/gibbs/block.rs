use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::NormalPrior;
use crate::error::{Error, Result};
use crate::probkit::{sample_mvn_canonical, sample_trunc_normal, Interval};

/// A Gaussian coefficient block under linear equality constraints and
/// per-coordinate sign bounds.
///
/// Full coefficients are `theta = A·free + c`: each free coordinate is a
/// group of merged full coordinates, and fixed coordinates sit in `c`.
#[derive(Debug, Clone)]
pub(crate) struct LinearBlock {
    /// For each full coordinate, its free index or `None` when fixed.
    slot: Vec<Option<usize>>,
    fixed: Vec<f64>,
    n_free: usize,
    /// Representative full coordinate of each free coordinate.
    reps: Vec<usize>,
    prior_prec: DVector<f64>,
    prior_lin: DVector<f64>,
    bounds: Vec<Interval>,
    bounded: Vec<usize>,
    unbounded: Vec<usize>,
}

/// Linear restrictions on a coefficient block, in full coordinates.
#[derive(Debug, Clone, Default)]
pub(crate) struct BlockRestrictions {
    pub fixed: Vec<(usize, f64)>,
    pub merged: Vec<(usize, usize)>,
    pub bounds: Vec<(usize, Interval)>,
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

impl LinearBlock {
    /// Zero prior variance pins a coordinate at its prior mean.
    pub fn new(priors: &[NormalPrior], r: &BlockRestrictions) -> Result<Self> {
        let d = priors.len();
        let mut parent: Vec<usize> = (0..d).collect();
        for &(a, b) in &r.merged {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            // the lower index represents the group
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut fixed_at: Vec<Option<f64>> = vec![None; d];
        let pins = priors
            .iter()
            .enumerate()
            .filter(|(_, p)| p.var == 0.0)
            .map(|(j, p)| (j, p.mean));
        for (j, v) in r.fixed.iter().copied().chain(pins) {
            let root = find(&mut parent, j);
            match fixed_at[root] {
                Some(old) if old != v => {
                    return Err(Error::Config(format!(
                        "coordinate {j} is fixed at both {old} and {v}"
                    )))
                }
                _ => fixed_at[root] = Some(v),
            }
        }
        let mut slot = vec![None; d];
        let mut fixed = vec![0.0; d];
        let mut reps = vec![];
        let mut root_slot: Vec<Option<usize>> = vec![None; d];
        for j in 0..d {
            let root = find(&mut parent, j);
            if let Some(v) = fixed_at[root] {
                fixed[j] = v;
                continue;
            }
            let k = *root_slot[root].get_or_insert_with(|| {
                reps.push(j);
                reps.len() - 1
            });
            slot[j] = Some(k);
        }
        let n_free = reps.len();
        let mut prior_prec = DVector::zeros(n_free);
        let mut prior_lin = DVector::zeros(n_free);
        for j in 0..d {
            if let Some(k) = slot[j] {
                prior_prec[k] += 1.0 / priors[j].var;
                prior_lin[k] += priors[j].mean / priors[j].var;
            }
        }
        let mut bounds = vec![Interval::REAL_LINE; n_free];
        for &(j, b) in &r.bounds {
            match slot[j] {
                Some(k) => {
                    let lo = bounds[k].lo.max(b.lo);
                    let hi = bounds[k].hi.min(b.hi);
                    if !(lo < hi) {
                        return Err(Error::Config(format!(
                            "bounds on coordinate {j} leave an empty interval"
                        )));
                    }
                    bounds[k] = Interval::new(lo, hi);
                }
                None if !b.contains(fixed[j]) => {
                    return Err(Error::Config(format!(
                        "coordinate {j} is fixed at {} outside its bound [{}, {}]",
                        fixed[j], b.lo, b.hi
                    )))
                }
                None => {}
            }
        }
        let (bounded, unbounded) = (0..n_free).partition(|&k| bounds[k] != Interval::REAL_LINE);
        Ok(Self {
            slot,
            fixed,
            n_free,
            reps,
            prior_prec,
            prior_lin,
            bounds,
            bounded,
            unbounded,
        })
    }

    pub fn dim(&self) -> usize {
        self.slot.len()
    }

    #[cfg(test)]
    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.slot[j].map_or(self.fixed[j], |k| free[k]))
            .collect()
    }

    /// Free coordinates read off `theta`, moved strictly inside any bounds.
    pub fn reduce(&self, theta: &[f64]) -> Vec<f64> {
        self.reps
            .iter()
            .zip(&self.bounds)
            .map(|(&j, b)| {
                let v = theta[j];
                if b.lo < v && v < b.hi {
                    v
                } else if b.hi == f64::INFINITY {
                    b.lo + 0.1 * (1.0 + b.lo.abs())
                } else if b.lo == f64::NEG_INFINITY {
                    b.hi - 0.1 * (1.0 + b.hi.abs())
                } else {
                    b.midpoint()
                }
            })
            .collect()
    }

    /// Canonical-form Gaussian conditional of the free coordinates given
    /// full-space data moments `xtx = Σ d dᵀ`, `xty = Σ y d` and noise precision `w`.
    pub fn conditional(
        &self,
        xtx: &DMatrix<f64>,
        xty: &DVector<f64>,
        w: f64,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let k = self.n_free;
        let d = self.dim();
        let mut q = DMatrix::from_diagonal(&self.prior_prec);
        let mut b = self.prior_lin.clone();
        // y - d·c enters the linear term
        let xtx_c = xtx * DVector::from_column_slice(&self.fixed);
        for i in 0..d {
            let Some(ki) = self.slot[i] else { continue };
            b[ki] += w * (xty[i] - xtx_c[i]);
            for j in 0..d {
                if let Some(kj) = self.slot[j] {
                    q[(ki, kj)] += w * xtx[(i, j)];
                }
            }
        }
        debug_assert_eq!(q.nrows(), k);
        (q, b)
    }

    /// One Gibbs pass over the block: bounded coordinates one at a time from
    /// their truncated conditionals, then the rest jointly.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        xtx: &DMatrix<f64>,
        xty: &DVector<f64>,
        w: f64,
        current: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let (q, b) = self.conditional(xtx, xty, w);
        let mut free = self.reduce(current);
        for &k in &self.bounded {
            let qkk = q[(k, k)];
            if !(qkk > 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "conditional precision {qkk} for free coordinate {k}"
                )));
            }
            let rest: f64 = (0..self.n_free).filter(|&j| j != k).map(|j| q[(k, j)] * free[j]).sum();
            let mean = (b[k] - rest) / qkk;
            let bd = self.bounds[k];
            free[k] = sample_trunc_normal(mean, 1.0 / qkk, bd.lo, bd.hi, rng)?;
        }
        let u = &self.unbounded;
        if !u.is_empty() {
            let quu = DMatrix::from_fn(u.len(), u.len(), |a, c| q[(u[a], u[c])]);
            let buu = DVector::from_fn(u.len(), |a, _| {
                b[u[a]] - self.bounded.iter().map(|&j| q[(u[a], j)] * free[j]).sum::<f64>()
            });
            let x = sample_mvn_canonical(&quu, &buu, rng)?;
            for (a, &k) in u.iter().enumerate() {
                free[k] = x[a];
            }
        }
        Ok(self.expand(&free))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probkit::RngStream;

    fn vague(d: usize) -> Vec<NormalPrior> {
        vec![NormalPrior::VAGUE; d]
    }

    #[test]
    fn merge_and_fix() {
        let r = BlockRestrictions {
            fixed: vec![(1, 0.0)],
            merged: vec![(0, 2)],
            bounds: vec![],
        };
        let blk = LinearBlock::new(&vague(4), &r).unwrap();
        assert_eq!(blk.n_free(), 2);
        assert_eq!(blk.expand(&[3.0, 7.0]), vec![3.0, 0.0, 3.0, 7.0]);
    }

    #[test]
    fn fixed_member_fixes_its_group() {
        let r = BlockRestrictions {
            fixed: vec![(2, 0.0)],
            merged: vec![(0, 2)],
            bounds: vec![],
        };
        let blk = LinearBlock::new(&vague(3), &r).unwrap();
        assert_eq!(blk.n_free(), 1);
        assert_eq!(blk.expand(&[5.0]), vec![0.0, 5.0, 0.0]);
    }

    #[test]
    fn zero_prior_variance_pins() {
        let mut pri = vague(2);
        pri[1] = NormalPrior { mean: 2.5, var: 0.0 };
        let blk = LinearBlock::new(&pri, &BlockRestrictions::default()).unwrap();
        let xtx = DMatrix::from_row_slice(2, 2, &[10.0, 3.0, 3.0, 10.0]);
        let xty = DVector::from_row_slice(&[1.0, -4.0]);
        let mut rng = RngStream::new(1, 0);
        for _ in 0..20 {
            let th = blk.draw(&xtx, &xty, 1.0, &[0.0, 2.5], &mut rng).unwrap();
            assert_eq!(th[1], 2.5);
        }
    }

    #[test]
    fn conditional_matches_direct_regression() {
        // theta = (a, 0, a): design columns 0 and 2 add up
        let r = BlockRestrictions {
            fixed: vec![(1, 0.0)],
            merged: vec![(0, 2)],
            bounds: vec![],
        };
        let pri = vec![NormalPrior { mean: 1.0, var: 4.0 }; 3];
        let blk = LinearBlock::new(&pri, &r).unwrap();
        let rows = [[1.0, 2.0, 0.5], [0.0, 1.0, 2.0], [3.0, -1.0, 1.0]];
        let ys = [1.0, 2.0, 3.0];
        let mut xtx = DMatrix::zeros(3, 3);
        let mut xty = DVector::zeros(3);
        for (row, y) in rows.iter().zip(ys) {
            let d = DVector::from_row_slice(row);
            xtx += &d * d.transpose();
            xty += d * y;
        }
        let (q, b) = blk.conditional(&xtx, &xty, 2.0);
        let z: Vec<f64> = rows.iter().map(|r| r[0] + r[2]).collect();
        let zz: f64 = z.iter().map(|v| v * v).sum();
        let zy: f64 = z.iter().zip(ys).map(|(a, y)| a * y).sum();
        assert!((q[(0, 0)] - (2.0 * zz + 0.5)).abs() < 1e-12);
        assert!((b[0] - (2.0 * zy + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn bounded_draws_respect_bounds() {
        let r = BlockRestrictions {
            bounds: vec![(0, Interval::new(0.0, f64::INFINITY))],
            ..Default::default()
        };
        let blk = LinearBlock::new(&vague(2), &r).unwrap();
        // data pull coordinate 0 towards -1
        let xtx = DMatrix::from_row_slice(2, 2, &[50.0, 10.0, 10.0, 50.0]);
        let xty = DVector::from_row_slice(&[-50.0, 0.0]);
        let mut rng = RngStream::new(2, 0);
        let mut cur = vec![1.0, 0.0];
        for _ in 0..500 {
            cur = blk.draw(&xtx, &xty, 1.0, &cur, &mut rng).unwrap();
            assert!(cur[0] >= 0.0);
        }
    }

    #[test]
    fn fixed_outside_bound_is_rejected() {
        let r = BlockRestrictions {
            fixed: vec![(0, -1.0)],
            merged: vec![],
            bounds: vec![(0, Interval::new(0.0, f64::INFINITY))],
        };
        assert!(LinearBlock::new(&vague(1), &r).is_err());
    }
}
