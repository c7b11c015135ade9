//! Biharmonic inpainting.
//!
//! Hole pixels are solved so that the squared 5-point Laplacian vanishes,
//! i.e. `L² u = 0` at every unknown, with known pixels as fixed data. Away
//! from the image border `L²` is the 13-point biharmonic stencil
//! (20, -8, 2, 1). At the border `L` is the graph Laplacian of the pixel grid,
//! which equals reflecting the missing neighbor onto the pixel itself.
//!
//! The restricted operator `P L L Pᵀ` is symmetric positive definite whenever
//! at least one pixel is known, so conjugate gradient applies directly
//! without forming normal equations.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::image::{ImageTensor, RegionMask};
use crate::linalg::DenseMatrix;

/// Largest hole solved densely when conjugate gradient stalls.
pub const DENSE_FALLBACK_LIMIT: usize = 2000;

/// Target for the max-norm of `L² u` over the unknowns.
const RESIDUAL_TOL: f64 = 1e-10;

struct Grid {
    height: usize,
    width: usize,
}

impl Grid {
    #[inline]
    fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> {
        let (y, x) = (i / self.width, i % self.width);
        let (h, w) = (self.height, self.width);
        [
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
        ]
        .into_iter()
        .flatten()
    }

    /// `(L f)(i)` for a full-size field.
    #[inline]
    fn laplacian_at(&self, f: &[f64], i: usize) -> f64 {
        let mut s = 0.0;
        for n in self.neighbors(i) {
            s += f[n] - f[i];
        }
        s
    }
}

struct Problem {
    grid: Grid,
    unknowns: Vec<usize>,
    /// Unknowns plus their 4-neighbors: every pixel where `L z` can be
    /// nonzero for `z` supported on the hole.
    sites: Vec<usize>,
}

impl Problem {
    fn new(hole: &RegionMask) -> Self {
        let grid = Grid { height: hole.height(), width: hole.width() };
        let unknowns = hole.indices();
        let mut in_sites = vec![false; hole.height() * hole.width()];
        for &i in &unknowns {
            in_sites[i] = true;
            for n in grid.neighbors(i) {
                in_sites[n] = true;
            }
        }
        let sites = in_sites.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect();
        Self { grid, unknowns, sites }
    }

    /// `out[k] = (L (L field))(unknowns[k])`, using `lap` as scratch.
    fn apply_bilaplacian(&self, field: &[f64], lap: &mut [f64], out: &mut [f64]) {
        for &s in &self.sites {
            lap[s] = self.grid.laplacian_at(field, s);
        }
        for (o, &i) in out.iter_mut().zip(&self.unknowns) {
            *o = self.grid.laplacian_at(lap, i);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves one channel in place. `field` holds known values everywhere and an
/// initial guess on the unknowns.
fn solve_channel(p: &Problem, field: &mut [f64]) -> Result<()> {
    let n = p.unknowns.len();
    let mut lap = vec![0.0; field.len()];
    let mut r = vec![0.0; n];
    p.apply_bilaplacian(field, &mut lap, &mut r);
    r.iter_mut().for_each(|v| *v = -*v);
    if max_abs(&r) < RESIDUAL_TOL {
        return Ok(());
    }

    // Conjugate gradient on the correction; the direction lives in a
    // full-size field so the operator can be applied with the same code.
    let mut dir_field = vec![0.0; field.len()];
    let mut d = r.clone();
    let mut ad = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let max_iters = (20 * n).max(2000);
    let mut residual = max_abs(&r);
    for iter in 1..=max_iters {
        for (&i, &v) in p.unknowns.iter().zip(&d) {
            dir_field[i] = v;
        }
        p.apply_bilaplacian(&dir_field, &mut lap, &mut ad);
        let dad = dot(&d, &ad);
        if dad <= 0.0 {
            break;
        }
        let alpha = rr / dad;
        for (k, &i) in p.unknowns.iter().enumerate() {
            field[i] += alpha * d[k];
            r[k] -= alpha * ad[k];
        }
        if iter % 50 == 0 {
            // refresh the recursive residual against drift
            p.apply_bilaplacian(field, &mut lap, &mut r);
            r.iter_mut().for_each(|v| *v = -*v);
        }
        residual = max_abs(&r);
        if residual < RESIDUAL_TOL {
            p.apply_bilaplacian(field, &mut lap, &mut r);
            residual = max_abs(&r);
            if residual < RESIDUAL_TOL {
                return Ok(());
            }
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (dk, rk) in d.iter_mut().zip(&r) {
            *dk = rk + beta * *dk;
        }
    }

    if n <= DENSE_FALLBACK_LIMIT {
        log::debug!("CG stalled at residual {residual:e}; solving {n} unknowns densely");
        return solve_dense(p, field);
    }
    Err(Error::SolverDiverged { residual, iterations: max_iters })
}

/// Assembles `P L L Pᵀ` explicitly and solves by Cholesky.
fn solve_dense(p: &Problem, field: &mut [f64]) -> Result<()> {
    let n = p.unknowns.len();
    let index: BTreeMap<usize, usize> = p.unknowns.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut a = DenseMatrix::zeros(n);
    for (col, &j) in p.unknowns.iter().enumerate() {
        // L e_j
        let mut first: BTreeMap<usize, f64> = BTreeMap::new();
        let mut deg = 0.0;
        for nb in p.grid.neighbors(j) {
            *first.entry(nb).or_default() += 1.0;
            deg += 1.0;
        }
        *first.entry(j).or_default() -= deg;
        // L (L e_j), kept only on unknowns
        for (&s, &v) in &first {
            let mut deg = 0.0;
            for nb in p.grid.neighbors(s) {
                deg += 1.0;
                if let Some(&row) = index.get(&nb) {
                    a.add(row, col, v);
                }
            }
            if let Some(&row) = index.get(&s) {
                a.add(row, col, -deg * v);
            }
        }
    }
    for &i in &p.unknowns {
        field[i] = 0.0;
    }
    let mut lap = vec![0.0; field.len()];
    let mut b = vec![0.0; n];
    p.apply_bilaplacian(field, &mut lap, &mut b);
    b.iter_mut().for_each(|v| *v = -*v);
    let x = a.cholesky_solve(&b, 1e-14)?;
    for (&i, v) in p.unknowns.iter().zip(x) {
        field[i] = v;
    }
    Ok(())
}

/// Fills `hole` with the biharmonic interpolant of the surrounding pixels,
/// channel by channel. Pixels outside the hole are returned unchanged.
pub fn inpaint_biharmonic(img: &ImageTensor, hole: &RegionMask) -> Result<ImageTensor> {
    hole.require_dims(img.dims())?;
    hole.require_nonempty()?;
    if hole.is_full() {
        return Err(Error::MaskCoversEverything);
    }
    let p = Problem::new(hole);
    let c = img.channels();
    let fields: Vec<Result<Vec<f64>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..c)
            .map(|ch| {
                let p = &p;
                scope.spawn(move || {
                    let mut field: Vec<f64> = img.data().iter().skip(ch).step_by(c).copied().collect();
                    let guess = ring_mean(p, hole, &field);
                    for &i in &p.unknowns {
                        field[i] = guess;
                    }
                    solve_channel(p, &mut field).map(|_| field)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("inpaint worker panicked")).collect()
    });
    let mut data = img.data().to_vec();
    for (ch, field) in fields.into_iter().enumerate() {
        let field = field?;
        for &i in &p.unknowns {
            data[i * c + ch] = field[i];
        }
    }
    ImageTensor::clipped(img.height(), img.width(), c, data)
}

fn ring_mean(p: &Problem, hole: &RegionMask, field: &[f64]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for &s in &p.sites {
        if !hole.at(s) {
            sum += field[s];
            n += 1;
        }
    }
    if n == 0 {
        0.5
    } else {
        sum / n as f64
    }
}
