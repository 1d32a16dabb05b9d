//! Discrete-velocity collision operator on an integer velocity lattice.
//!
//! A collision `(v_i, v_j) -> (v_k, v_l)` is admissible when momentum and
//! energy are conserved exactly in integer arithmetic. With `C_ij` the set of
//! ordered admissible output pairs (which always contains `(i, j)` and
//! `(j, i)`), the transition rate is
//! `A_ij^kl = S |v_i - v_j| / |C_ij|` and
//!
//! ```text
//! Q_i = sum_{j, k, l} A_ij^kl (f_k f_l - f_i f_j).
//! ```
//!
//! The table stores one record per unordered pair of unordered pairs
//! `{ {i, j}, {k, l} }`, which stands for the eight ordered tuples obtained by
//! swapping inside either pair and swapping the pairs. The swap symmetry
//! `A_ij^kl = A_kl^ij` (same centre and radius give the same `C`) is what makes
//! the deduplicated update exactly conservative.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Distribution, Velocity, VelocityGrid, MAX_DIM};

/// Records per parallel chunk; fixed so the summation order never depends on
/// the thread count.
const CHUNK: usize = 4096;

const LATTICE_TOL: f64 = 1e-9;

type Point = [i64; MAX_DIM];

/// Velocity points of the form `scale * z` with integer `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    dim: usize,
    scale: f64,
    points: Vec<Point>,
    lookup: HashMap<Point, usize>,
    grid: Option<VelocityGrid>,
}

impl Lattice {
    fn build(dim: usize, scale: f64, points: Vec<Point>, grid: Option<VelocityGrid>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("scale", format!("must be positive, got {scale}")));
        }
        let mut lookup = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if lookup.insert(*p, i).is_some() {
                return Err(Error::NonLatticeGrid(format!("duplicate point {:?}", &p[..dim])));
            }
        }
        Ok(Self { dim, scale, points, lookup, grid })
    }

    /// All integer points of `[lo, hi]^dim`, first axis slowest, unit spacing.
    pub fn cube(dim: usize, lo: i64, hi: i64) -> Result<Self> {
        if hi < lo {
            return Err(Error::invalid("hi", "must be >= lo"));
        }
        let side = (hi - lo + 1) as usize;
        let count = side.checked_pow(dim as u32).ok_or_else(|| Error::invalid("dim", "lattice too large"))?;
        let points = (0..count)
            .map(|mut j| {
                let mut p = [0; MAX_DIM];
                for a in (0..dim).rev() {
                    p[a] = lo + (j % side) as i64;
                    j /= side;
                }
                p
            })
            .collect();
        Self::build(dim, 1.0, points, None)
    }

    /// The nodes of a velocity grid, in grid order. Grid nodes are
    /// `h (j - n/2)`, so the lattice scale is the grid spacing.
    pub fn from_grid(grid: &VelocityGrid) -> Result<Self> {
        let h = grid.spacing();
        let points = grid.nodes().map(|v| snap(&v, grid.dim(), h)).collect::<Result<Vec<_>>>()?;
        Self::build(grid.dim(), h, points, Some(*grid))
    }

    /// Arbitrary velocities that must be integer multiples of `scale`.
    pub fn from_points(dim: usize, scale: f64, velocities: &[Velocity]) -> Result<Self> {
        let points = velocities.iter().map(|v| snap(v, dim, scale)).collect::<Result<Vec<_>>>()?;
        Self::build(dim, scale, points, None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integer coordinates of point `i`.
    pub fn point(&self, i: usize) -> &[i64] {
        &self.points[i][..self.dim]
    }

    pub fn velocity(&self, i: usize) -> Velocity {
        let mut v = [0.0; MAX_DIM];
        for a in 0..self.dim {
            v[a] = self.points[i][a] as f64 * self.scale;
        }
        v
    }

    pub fn index_of(&self, p: &[i64]) -> Option<usize> {
        let mut key = [0; MAX_DIM];
        key[..self.dim].copy_from_slice(&p[..self.dim]);
        self.lookup.get(&key).copied()
    }

    /// The velocity grid this lattice was built from, if any.
    pub fn grid(&self) -> Option<&VelocityGrid> {
        self.grid.as_ref()
    }

    fn energy(&self, i: usize) -> i64 {
        self.points[i].iter().map(|z| z * z).sum()
    }
}

fn snap(v: &Velocity, dim: usize, scale: f64) -> Result<Point> {
    let mut p = [0; MAX_DIM];
    for a in 0..dim {
        let z = v[a] / scale;
        let r = z.round();
        if (z - r).abs() > LATTICE_TOL {
            return Err(Error::NonLatticeGrid(format!(
                "coordinate {} is not an integer multiple of {scale} (off by {:e})",
                v[a],
                (z - r).abs()
            )));
        }
        p[a] = r as i64;
    }
    Ok(p)
}

/// Ordered admissible output pairs `C_ij`, including the trivial `(i, j)` and
/// `(j, i)`, sorted by `(k, l)`.
pub fn admissible_outputs(lattice: &Lattice, i: usize, j: usize) -> Vec<(usize, usize)> {
    let d = lattice.dim;
    let (pi, pj) = (lattice.points[i], lattice.points[j]);
    let energy = lattice.energy(i) + lattice.energy(j);
    let mut out = Vec::new();
    for k in 0..lattice.len() {
        let pk = lattice.points[k];
        let mut pl = [0; MAX_DIM];
        for a in 0..d {
            pl[a] = pi[a] + pj[a] - pk[a];
        }
        if let Some(&l) = lattice.lookup.get(&pl) {
            if lattice.energy(k) + lattice.energy(l) == energy {
                out.push((k, l));
            }
        }
    }
    out
}

/// One deduplicated collision: `i < j`, `k < l`, `(i, j) < (k, l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadruple {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub l: usize,
    /// `A_ij^kl` for a single ordered tuple.
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct CollisionTable {
    lattice: Lattice,
    cross_section: f64,
    quadruples: Vec<Quadruple>,
    max_rate: f64,
}

impl CollisionTable {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn cross_section(&self) -> f64 {
        self.cross_section
    }

    pub fn quadruples(&self) -> &[Quadruple] {
        &self.quadruples
    }

    pub fn max_rate(&self) -> f64 {
        self.max_rate
    }

    /// `Q_i` for values indexed like the lattice points.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.lattice.len();
        if f.len() != n {
            return Err(Error::GridMismatch(format!("{} values for a {n}-point lattice", f.len())));
        }
        let partials: Vec<Vec<f64>> = self
            .quadruples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut q = vec![0.0; n];
                for c in chunk {
                    let delta = 2.0 * c.rate * (f[c.k] * f[c.l] - f[c.i] * f[c.j]);
                    q[c.i] += delta;
                    q[c.j] += delta;
                    q[c.k] -= delta;
                    q[c.l] -= delta;
                }
                q
            })
            .collect();
        let mut q = vec![0.0; n];
        for p in &partials {
            for (a, b) in q.iter_mut().zip(p) {
                *a += b;
            }
        }
        Ok(q)
    }

    /// Sorted text form: `#` header lines, then `i j k l rate` per record.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# dim {}", self.lattice.dim)?;
        writeln!(w, "# points {}", self.lattice.len())?;
        writeln!(w, "# scale {:.17e}", self.lattice.scale)?;
        writeln!(w, "# cross_section {:.17e}", self.cross_section)?;
        for c in &self.quadruples {
            writeln!(w, "{} {} {} {} {:.17e}", c.i, c.j, c.k, c.l, c.rate)?;
        }
        Ok(())
    }

    /// Reads a table written by [`write_text`](Self::write_text) for `lattice`.
    pub fn read_text<R: Read>(r: R, lattice: Lattice) -> Result<Self> {
        let mut cross_section = None;
        let mut quadruples = Vec::new();
        for line in BufReader::new(r).lines() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let mut it = h.split_whitespace();
                let (key, value) = (it.next(), it.next());
                let bad = || Error::Format(format!("bad header line {line:?}"));
                match key {
                    Some("dim") if value.and_then(|v| v.parse::<usize>().ok()) != Some(lattice.dim) => {
                        return Err(Error::GridMismatch("table dimension differs from lattice".into()))
                    }
                    Some("points") if value.and_then(|v| v.parse::<usize>().ok()) != Some(lattice.len()) => {
                        return Err(Error::GridMismatch("table point count differs from lattice".into()))
                    }
                    Some("cross_section") => cross_section = Some(value.ok_or_else(bad)?.parse().map_err(|_| bad())?),
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("bad record {line:?}"));
            if fields.len() != 5 {
                return Err(bad());
            }
            let idx: Vec<usize> = fields[..4].iter().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
            if idx.iter().any(|&x| x >= lattice.len()) {
                return Err(bad());
            }
            let rate: f64 = fields[4].parse().map_err(|_| bad())?;
            quadruples.push(Quadruple { i: idx[0], j: idx[1], k: idx[2], l: idx[3], rate });
        }
        let cross_section = cross_section.ok_or_else(|| Error::Format("missing cross_section header".into()))?;
        let max_rate = quadruples.iter().fold(0.0f64, |m, q| m.max(q.rate));
        Ok(Self { lattice, cross_section, quadruples, max_rate })
    }
}

/// Exhaustive enumeration of admissible collisions with uniform weights
/// `a_ij^kl = 1 / |C_ij|` and cross section `s`.
///
/// Candidate outputs are all lattice points; pairs whose outputs would leave
/// the lattice are simply absent, which truncates the collision sphere at the
/// lattice boundary.
pub fn enumerate_collisions(lattice: &Lattice, cross_section: f64) -> Result<CollisionTable> {
    if !(cross_section > 0.0 && cross_section.is_finite()) {
        return Err(Error::invalid("cross_section", format!("must be positive, got {cross_section}")));
    }
    let n = lattice.len();
    let mut quadruples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let outputs = admissible_outputs(lattice, i, j);
            let (vi, vj) = (lattice.velocity(i), lattice.velocity(j));
            let g = (0..lattice.dim).map(|a| (vi[a] - vj[a]).powi(2)).sum::<f64>().sqrt();
            let rate = cross_section * g / outputs.len() as f64;
            for &(k, l) in &outputs {
                if k < l && (i, j) < (k, l) {
                    quadruples.push(Quadruple { i, j, k, l, rate });
                }
            }
        }
    }
    let max_rate = quadruples.iter().fold(0.0f64, |m, q| m.max(q.rate));
    Ok(CollisionTable { lattice: lattice.clone(), cross_section, quadruples, max_rate })
}

/// `Q` for a distribution on the grid the table's lattice was built from.
pub fn dvm_collision(f: &Distribution, table: &CollisionTable) -> Result<Distribution> {
    match table.lattice.grid() {
        Some(g) => g.check_same(f.grid())?,
        None => return Err(Error::GridMismatch("table lattice is not attached to a velocity grid".into())),
    }
    Distribution::new(*f.grid(), table.apply(f.values())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sums(lattice: &Lattice, q: &[f64]) -> Vec<f64> {
        let d = lattice.dim();
        let mut s = vec![0.0; d + 2];
        for (i, qi) in q.iter().enumerate() {
            let v = lattice.velocity(i);
            s[0] += qi;
            for a in 0..d {
                s[1 + a] += qi * v[a];
            }
            s[d + 1] += qi * (0..d).map(|a| v[a] * v[a]).sum::<f64>();
        }
        s
    }

    #[test]
    fn one_dimensional_lattice_has_only_trivial_outputs() {
        let lat = Lattice::cube(1, 0, 3).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_eq!(admissible_outputs(&lat, i, j), vec![(i, j), (j, i)]);
            }
        }
        let t = enumerate_collisions(&lat, 1.0).unwrap();
        assert!(t.quadruples().is_empty());
        assert!(t.apply(&[2.0; 4]).unwrap().iter().all(|&q| q == 0.0));
    }

    #[test]
    fn unit_square_diagonal_swap() {
        let lat = Lattice::cube(2, 0, 1).unwrap();
        let (a, b) = (lat.index_of(&[0, 0]).unwrap(), lat.index_of(&[1, 1]).unwrap());
        let (c, d) = (lat.index_of(&[1, 0]).unwrap(), lat.index_of(&[0, 1]).unwrap());
        let out = admissible_outputs(&lat, a, b);
        assert!(out.contains(&(c, d)) && out.contains(&(d, c)));
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn matches_brute_force_on_three_by_three() {
        let lat = Lattice::cube(2, 0, 2).unwrap();
        let n = lat.len();
        let table = enumerate_collisions(&lat, 1.0).unwrap();

        // Independent count: all ordered tuples conserving momentum and energy.
        let e = |i: usize| lat.point(i).iter().map(|z| z * z).sum::<i64>();
        let mut ordered = vec![];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let momentum = (0..2).all(|a| lat.point(i)[a] + lat.point(j)[a] == lat.point(k)[a] + lat.point(l)[a]);
                        if momentum && e(i) + e(j) == e(k) + e(l) {
                            ordered.push((i, j, k, l));
                        }
                    }
                }
            }
        }
        let nontrivial = ordered
            .iter()
            .filter(|&&(i, j, k, l)| i != j && k != l && !((i, j) == (k, l) || (i, j) == (l, k)))
            .count();
        assert_eq!(nontrivial, 8 * table.quadruples().len());
        // 4 unit squares, 4 unit-by-two rectangles, the full square, the tilted square.
        assert_eq!(table.quadruples().len(), 10);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let mut count = vec![0usize; n * n];
        for &(i, j, _, _) in &ordered {
            count[i * n + j] += 1;
        }
        let mut expect = vec![0.0; n];
        for &(i, j, k, l) in &ordered {
            let vi = lat.velocity(i);
            let vj = lat.velocity(j);
            let g = ((vi[0] - vj[0]).powi(2) + (vi[1] - vj[1]).powi(2)).sqrt();
            expect[i] += g / count[i * n + j] as f64 * (f[k] * f[l] - f[i] * f[j]);
        }
        let q = table.apply(&f).unwrap();
        for (a, b) in q.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn rates_are_uniform_and_symmetric() {
        let lat = Lattice::cube(2, 0, 4).unwrap();
        let table = enumerate_collisions(&lat, 1.5).unwrap();
        for c in table.quadruples() {
            let (vi, vj) = (lat.velocity(c.i), lat.velocity(c.j));
            let (vk, vl) = (lat.velocity(c.k), lat.velocity(c.l));
            let g = ((vi[0] - vj[0]).powi(2) + (vi[1] - vj[1]).powi(2)).sqrt();
            let g_out = ((vk[0] - vl[0]).powi(2) + (vk[1] - vl[1]).powi(2)).sqrt();
            let n_in = admissible_outputs(&lat, c.i, c.j).len();
            assert_eq!(n_in, admissible_outputs(&lat, c.k, c.l).len());
            assert!((g - g_out).abs() < 1e-14);
            assert!((c.rate - 1.5 * g / n_in as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn conserves_and_kills_exponentials() {
        let lat = Lattice::cube(2, 0, 4).unwrap();
        let table = enumerate_collisions(&lat, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let f: Vec<f64> = (0..lat.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let q = table.apply(&f).unwrap();
            let l1: f64 = f.iter().sum();
            for s in sums(&lat, &q) {
                assert!(s.abs() <= 1e-12 * l1 * table.max_rate(), "{s:e}");
            }
        }
        let (a, b, c) = (0.3, [0.2, -0.1], -0.15);
        let f: Vec<f64> = (0..lat.len())
            .map(|i| {
                let v = lat.velocity(i);
                (a + b[0] * v[0] + b[1] * v[1] + c * (v[0] * v[0] + v[1] * v[1])).exp()
            })
            .collect();
        let fmax = f.iter().fold(0.0f64, |m, x| m.max(*x));
        assert!(table.apply(&f).unwrap().iter().all(|q| q.abs() <= 1e-12 * fmax * fmax));
    }

    #[test]
    fn grid_lattice_and_text_round_trip() {
        let g = VelocityGrid::with_default_radius(2, 6, 3.0).unwrap();
        let lat = Lattice::from_grid(&g).unwrap();
        assert_eq!(lat.point(0), &[-3, -3]);
        let table = enumerate_collisions(&lat, 0.5).unwrap();
        let mut buf = Vec::new();
        table.write_text(&mut buf).unwrap();
        let back = CollisionTable::read_text(buf.as_slice(), lat.clone()).unwrap();
        assert_eq!(back.quadruples(), table.quadruples());
        let f = Distribution::from_fn(g, |v| (-(v[0] * v[0] + v[1] * v[1])).exp());
        let q = dvm_collision(&f, &table).unwrap();
        assert_eq!(q.values(), back.apply(f.values()).unwrap().as_slice());
        let other = VelocityGrid::with_default_radius(2, 6, 4.0).unwrap();
        assert!(matches!(dvm_collision(&Distribution::zeros(other), &table), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn rejects_off_lattice_points() {
        let err = Lattice::from_points(2, 1.0, &[[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonLatticeGrid(_)));
    }
}
