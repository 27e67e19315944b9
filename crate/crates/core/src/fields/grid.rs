use std::io::{BufRead, Write};

use rayon::prelude::*;
use smallvec::SmallVec;

use crate::field::ScalarField;
use crate::group::{compose, inverse, Coords, HPoint};
use crate::{lit, to_f64, Error, Result, Scalar};

pub const DEFAULT_BUDGET: usize = 60_000_000;

/// A Cartesian box in the local coordinates of a left-translated frame:
/// node `i` sits at the physical point `origin ∘ (lo + i·spacing)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec<T: Scalar> {
    pub n: usize,
    pub lo: Coords<T>,
    pub hi: Coords<T>,
    pub spacing: Coords<T>,
    pub origin: HPoint<T>,
    pub budget: usize,
    counts: SmallVec<[usize; 4]>,
}

impl<T: Scalar> GridSpec<T> {
    /// Per-axis bounds and spacings for axes `[x_1..x_n, y_1..y_n, t]`.
    /// Spacings are adjusted so that nodes land exactly on both ends.
    pub fn new(n: usize, lo: &[T], hi: &[T], spacing: &[T]) -> Result<Self> {
        let d = 2 * n + 1;
        if lo.len() != d || hi.len() != d || spacing.len() != d {
            return Err(Error::Grid(format!("expected {d} bounds and spacings")));
        }
        let mut counts = SmallVec::new();
        let mut sp = SmallVec::new();
        for k in 0..d {
            if !(spacing[k] > T::zero()) {
                return Err(Error::Grid(format!("spacing {k} must be positive")));
            }
            if !(hi[k] > lo[k]) {
                return Err(Error::Grid(format!("axis {k} is empty")));
            }
            let m = to_f64((hi[k] - lo[k]) / spacing[k]).round().max(1.0) as usize;
            counts.push(m + 1);
            sp.push((hi[k] - lo[k]) / lit::<T>(m as f64));
        }
        let g = GridSpec {
            n,
            lo: lo.iter().copied().collect(),
            hi: hi.iter().copied().collect(),
            spacing: sp,
            origin: HPoint::origin(n),
            budget: DEFAULT_BUDGET,
            counts,
        };
        g.check_budget()?;
        Ok(g)
    }

    /// Box `[−a, a]^{2n} × [−b, b]` with spacings `hz` and `ht`.
    pub fn symmetric(n: usize, a: T, b: T, hz: T, ht: T) -> Result<Self> {
        let d = 2 * n + 1;
        let mut lo = vec![-a; d];
        let mut hi = vec![a; d];
        let mut sp = vec![hz; d];
        lo[d - 1] = -b;
        hi[d - 1] = b;
        sp[d - 1] = ht;
        Self::new(n, &lo, &hi, &sp)
    }

    /// The desk-scale default for `n = 1`: `[−12,12]² × [−40,40]`,
    /// spacing 0.15 in `x, y` and 0.4 in `t`.
    pub fn default_n1() -> Self {
        Self::symmetric(1, lit(12.0), lit(40.0), lit(0.15), lit(0.4)).expect("default grid")
    }

    /// A box adapted to a bubble of concentration `lambda` at `center`:
    /// the unit-scale box `[−a,a]^{2n}×[−b,b]` dilated by `1/lambda`.
    pub fn around(center: &HPoint<T>, lambda: T, a: T, b: T, hz: T, ht: T) -> Result<Self> {
        let r = T::one() / lambda;
        let mut g = Self::symmetric(center.n(), a * r, b * r * r, hz * r, ht * r * r)?;
        g.origin = center.clone();
        Ok(g)
    }

    pub fn with_origin(mut self, origin: HPoint<T>) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Result<Self> {
        self.budget = budget;
        self.check_budget()?;
        Ok(self)
    }

    fn check_budget(&self) -> Result<()> {
        let need = self.len();
        if need > self.budget {
            return Err(Error::Budget { need, budget: self.budget });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Halves every spacing (same box and frame).
    pub fn refined(&self) -> Result<Self> {
        let sp: Vec<T> = self.spacing.iter().map(|&h| h / lit(2.0)).collect();
        let mut g = Self::new(self.n, &self.lo, &self.hi, &sp)?.with_budget(self.budget)?;
        g.origin = self.origin.clone();
        Ok(g)
    }

    /// Local coordinates of a linear index (axis 0 fastest).
    pub fn local_coords(&self, mut idx: usize, out: &mut [T]) {
        for k in 0..self.dim() {
            let i = idx % self.counts[k];
            idx /= self.counts[k];
            out[k] = self.lo[k] + lit::<T>(i as f64) * self.spacing[k];
        }
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for k in (0..self.dim()).rev() {
            idx = idx * self.counts[k] + multi[k];
        }
        idx
    }

    pub fn to_local(&self, p: &HPoint<T>) -> HPoint<T> {
        if self.origin.is_origin() {
            p.clone()
        } else {
            compose(&inverse(&self.origin), p)
        }
    }

    pub fn to_physical(&self, local: &HPoint<T>) -> HPoint<T> {
        if self.origin.is_origin() {
            local.clone()
        } else {
            compose(&self.origin, local)
        }
    }

    /// True when `p` lies at least `cells` spacings inside the box.
    pub fn interior(&self, p: &HPoint<T>, cells: usize) -> bool {
        let q = self.to_local(p);
        let c = lit::<T>(cells as f64);
        (0..self.dim()).all(|k| {
            let v = q.coord(k);
            v >= self.lo[k] + c * self.spacing[k] && v <= self.hi[k] - c * self.spacing[k]
        })
    }
}

/// A function sampled on a [`GridSpec`], multilinearly interpolated and
/// extended by zero outside the box.
#[derive(Clone, Debug)]
pub struct GridField<T: Scalar> {
    pub spec: GridSpec<T>,
    pub data: Vec<T>,
}

impl<T: Scalar> GridField<T> {
    pub fn zeros(spec: GridSpec<T>) -> Self {
        let len = spec.len();
        GridField { spec, data: vec![T::zero(); len] }
    }

    pub fn sample<F: ScalarField<T> + ?Sized>(spec: &GridSpec<T>, f: &F) -> Self {
        let d = spec.dim();
        let data = (0..spec.len())
            .into_par_iter()
            .map_init(
                || vec![T::zero(); d],
                |buf, idx| {
                    spec.local_coords(idx, buf);
                    f.value(&spec.to_physical(&HPoint::from_coords(buf)))
                },
            )
            .collect();
        GridField { spec: spec.clone(), data }
    }

    /// Value at a node given by its multi-index.
    pub fn at(&self, multi: &[usize]) -> T {
        self.data[self.spec.index(multi)]
    }

    fn interpolate_local(&self, q: &HPoint<T>) -> T {
        let d = self.spec.dim();
        let mut base = [0usize; 16];
        let mut frac = [T::zero(); 16];
        for k in 0..d {
            let u = (q.coord(k) - self.spec.lo[k]) / self.spec.spacing[k];
            let m = self.spec.counts[k];
            if u < T::zero() || u > lit::<T>((m - 1) as f64) {
                return T::zero();
            }
            let i = to_f64(u.floor()) as usize;
            let i = i.min(m.saturating_sub(2));
            base[k] = i;
            frac[k] = u - lit::<T>(i as f64);
        }
        let mut s = T::zero();
        let mut multi = [0usize; 16];
        for corner in 0..(1usize << d) {
            let mut w = T::one();
            for k in 0..d {
                let bit = (corner >> k) & 1;
                multi[k] = base[k] + bit;
                w *= if bit == 1 { frac[k] } else { T::one() - frac[k] };
            }
            if w != T::zero() {
                s += w * self.at(&multi[..d]);
            }
        }
        s
    }

    /// Writes the text dump: a header line
    /// `n  min_0 max_0 .. min_{2n} max_{2n}  h_0 .. h_{2n}` (for `n = 1`:
    /// `n xmin xmax ymin ymax tmin tmax hx hy ht`), then one sample per line
    /// with axis 0 fastest. Coordinates are those of the local frame.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut head = vec![self.spec.n.to_string()];
        for k in 0..self.spec.dim() {
            head.push(format!("{:e}", to_f64(self.spec.lo[k])));
            head.push(format!("{:e}", to_f64(self.spec.hi[k])));
        }
        for k in 0..self.spec.dim() {
            head.push(format!("{:e}", to_f64(self.spec.spacing[k])));
        }
        writeln!(w, "{}", head.join(" "))?;
        for v in &self.data {
            writeln!(w, "{:e}", to_f64(*v))?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: &str| Error::Grid(format!("dump: {m}"));
        let mut lines = r.lines();
        let head = lines
            .next()
            .ok_or_else(|| bad("missing header"))?
            .map_err(|e| bad(&e.to_string()))?;
        let tok: Vec<&str> = head.split_whitespace().collect();
        let n: usize = tok.first().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad n"))?;
        let d = 2 * n + 1;
        if tok.len() != 1 + 3 * d {
            return Err(bad("header length"));
        }
        let num = |s: &str| s.parse::<f64>().map(lit::<T>).map_err(|_| bad("bad number"));
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut sp = Vec::new();
        for k in 0..d {
            lo.push(num(tok[1 + 2 * k])?);
            hi.push(num(tok[2 + 2 * k])?);
            sp.push(num(tok[1 + 2 * d + k])?);
        }
        let spec = GridSpec::new(n, &lo, &hi, &sp)?;
        let mut data = Vec::with_capacity(spec.len());
        for l in lines {
            let l = l.map_err(|e| bad(&e.to_string()))?;
            if l.trim().is_empty() {
                continue;
            }
            data.push(num(l.trim())?);
        }
        if data.len() != spec.len() {
            return Err(bad("sample count does not match header"));
        }
        Ok(GridField { spec, data })
    }
}

impl<T: Scalar> ScalarField<T> for GridField<T> {
    fn n(&self) -> usize {
        self.spec.n
    }

    fn value(&self, p: &HPoint<T>) -> T {
        self.interpolate_local(&self.spec.to_local(p))
    }

    fn grid(&self) -> Option<&GridSpec<T>> {
        Some(&self.spec)
    }
}
