//! Exact distribution propagation for walks on `Z^d`, `d <= 3`: dense
//! convolution over the reachable box. This is the deterministic oracle for
//! Monte Carlo return-frequency estimators and the workhorse of the staged
//! recurrent measure construction.

use crate::error::CoreError;

/// A finitely supported probability measure on `Z^d`.
#[derive(Clone, Debug)]
pub struct ZdMeasure {
    pub d: usize,
    pub atoms: Vec<(Vec<i32>, f64)>,
}

impl ZdMeasure {
    pub fn new(d: usize, atoms: Vec<(Vec<i32>, f64)>) -> Result<Self, CoreError> {
        if d == 0 || d > 3 {
            return Err(CoreError::InvalidParameter(format!(
                "convolution oracle supports 1 <= d <= 3, got {d}"
            )));
        }
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 || atoms.iter().any(|(o, p)| o.len() != d || *p < 0.0) {
            return Err(CoreError::InvalidMeasure(
                "atoms must be d-dimensional with nonnegative weights summing to 1".into(),
            ));
        }
        Ok(ZdMeasure { d, atoms })
    }

    /// Simple random walk: uniform on the `2d` signed unit steps, with
    /// holding mass `lazification` at the origin.
    pub fn srw(d: usize, lazification: f64) -> Self {
        let mut atoms = Vec::new();
        if lazification > 0.0 {
            atoms.push((vec![0; d], lazification));
        }
        let p = (1.0 - lazification) / (2 * d) as f64;
        for axis in 0..d {
            for sign in [1i32, -1] {
                let mut v = vec![0; d];
                v[axis] = sign;
                atoms.push((v, p));
            }
        }
        ZdMeasure { d, atoms }
    }

    /// Convex combination of measures on the same lattice.
    pub fn mix(parts: &[(f64, &ZdMeasure)]) -> Result<Self, CoreError> {
        let d = parts
            .first()
            .ok_or_else(|| CoreError::InvalidMeasure("empty mixture".into()))?
            .1
            .d;
        let mut atoms: std::collections::BTreeMap<Vec<i32>, f64> = Default::default();
        for (w, m) in parts {
            if m.d != d {
                return Err(CoreError::ArityMismatch(m.d, d));
            }
            for (o, p) in &m.atoms {
                *atoms.entry(o.clone()).or_insert(0.0) += w * p;
            }
        }
        ZdMeasure::new(d, atoms.into_iter().collect())
    }

    pub fn is_symmetric(&self) -> bool {
        self.atoms.iter().all(|(o, p)| {
            let neg: Vec<i32> = o.iter().map(|x| -x).collect();
            self.atoms
                .iter()
                .any(|(o2, p2)| *o2 == neg && (p2 - p).abs() < 1e-12)
        })
    }

    fn max_offset(&self) -> i64 {
        self.atoms
            .iter()
            .flat_map(|(o, _)| o.iter().map(|x| x.unsigned_abs() as i64))
            .max()
            .unwrap_or(0)
    }

    /// Exact return probabilities `p_t(0)` for `t = 0..=tmax`.
    pub fn return_probs(&self, tmax: usize) -> Result<Vec<f64>, CoreError> {
        let radius = (self.max_offset() * tmax as i64).max(1) as usize;
        let side = 2 * radius + 1;
        let cells = side.pow(self.d as u32);
        if cells > 80_000_000 {
            return Err(CoreError::InvalidParameter(format!(
                "convolution box too large: {cells} cells for horizon {tmax}"
            )));
        }
        let strides: Vec<usize> = (0..self.d)
            .map(|k| side.pow((self.d - 1 - k) as u32))
            .collect();
        let center: usize = strides.iter().map(|s| s * radius).sum();
        let atom_offsets: Vec<(isize, f64)> = self
            .atoms
            .iter()
            .map(|(o, p)| {
                let off: isize = o
                    .iter()
                    .zip(&strides)
                    .map(|(x, s)| *x as isize * *s as isize)
                    .sum();
                (off, *p)
            })
            .collect();

        let mut cur = vec![0.0f64; cells];
        let mut next = vec![0.0f64; cells];
        cur[center] = 1.0;
        let mut out = Vec::with_capacity(tmax + 1);
        out.push(1.0);
        // All mass after t steps lies within max_offset * t of the center, so
        // destination indices never leave the box.
        for _t in 1..=tmax {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (flat, &mass) in cur.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for (off, p) in &atom_offsets {
                    next[(flat as isize + off) as usize] += mass * p;
                }
            }
            std::mem::swap(&mut cur, &mut next);
            out.push(cur[center]);
        }
        Ok(out)
    }
}
