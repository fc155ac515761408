//! Discrete fields on radial and Cartesian grids.
//!
//! Two geometries back the evolution and diagnostics code:
//!
//! * [`RadialGrid`] — nodes `r_i = i h` with finite-volume cell masses
//!   `M_i = sigma_n ((r_{i+1/2})^n - (r_{i-1/2})^n)/n`. The flux-form Laplacian
//!   is self-adjoint in the mass-weighted inner product and reduces to the
//!   regularized `2n (u_1 - u_0)/h^2` at the center.
//! * [`BoxGrid`] — a cube `[-half, half]^n` (n = 1, 2, 3) with the standard
//!   2n+1-point Laplacian and zero Dirichlet boundary.
//!
//! The discrete energy uses the variational form
//! `J_h(u) = -1/2 <u, Lap_h u>_M + sum_i M_i F(u_i)`, whose dissipation
//! identity along the implicit-explicit flow holds without an `O(h^2)`
//! quadrature floor.

use crate::ground_state::RadialProfile;
use crate::reaction::Nonlinearity;
use crate::{lit, sphere_area, Real};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum FieldError {
    #[error("dimension {0} unsupported here (need 1, 2, or 3)")]
    BadDimension(usize),
    #[error("grid needs at least {need} nodes, got {got}")]
    GridTooSmall { need: usize, got: usize },
    #[error("value buffer has {got} entries, grid has {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("bubble center {center:?} keeps only {clearance} from the boundary; need {need}")]
    TooCloseToBoundary { center: [f64; 3], clearance: f64, need: f64 },
    #[error("io: {0}")]
    Io(String),
    #[error("field file malformed: {0}")]
    Parse(String),
}

impl From<std::io::Error> for FieldError {
    fn from(e: std::io::Error) -> Self {
        FieldError::Io(e.to_string())
    }
}

/// What the evolution and spectral code need from a discretized domain.
pub trait Geometry<T: Real> {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn spacing(&self) -> T;
    /// Quadrature weight (cell volume) of node `i`.
    fn mass(&self, i: usize) -> T;
    fn is_boundary(&self, i: usize) -> bool;
    /// Coordinates of node `i` (a radial grid reports `[r, 0, 0]`).
    fn position(&self, i: usize) -> [T; 3];
    /// Flux-form Laplacian; output at boundary nodes is zero.
    fn laplacian(&self, u: &[T], out: &mut [T]);
    /// Squared centered-difference gradient at node `i`.
    fn grad_sq_central(&self, u: &[T], i: usize) -> T;

    fn radius(&self, i: usize) -> T {
        let p = self.position(i);
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    /// Mass-weighted inner product `sum_i M_i u_i v_i`.
    fn dot(&self, u: &[T], v: &[T]) -> T {
        let mut s = T::zero();
        for i in 0..self.len() {
            s += self.mass(i) * u[i] * v[i];
        }
        s
    }
}

/// Uniform radial grid on `[0, (len-1) h]` for radially symmetric fields in
/// dimension `n`; the outermost node is the Dirichlet boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RadialGrid<T> {
    pub n: usize,
    pub h: T,
    pub len: usize,
}

impl<T: Real> RadialGrid<T> {
    pub fn new(n: usize, h: T, len: usize) -> Result<Self, FieldError> {
        if n == 0 {
            return Err(FieldError::BadDimension(n));
        }
        if len < 8 {
            return Err(FieldError::GridTooSmall { need: 8, got: len });
        }
        Ok(Self { n, h, len })
    }

    pub fn from_extent(n: usize, r_max: T, h: T) -> Result<Self, FieldError> {
        let len = (r_max / h).to_f64().unwrap().round() as usize + 1;
        Self::new(n, h, len)
    }

    pub fn r_max(&self) -> T {
        self.h * lit((self.len - 1) as f64)
    }

    /// `sigma_n ((i+1/2)^n - (i-1/2)^n) h^n / n`, with the half-cells at the
    /// center and the outer edge.
    fn cell_mass(&self, i: usize) -> T {
        let sigma = sphere_area::<T>(self.n);
        let nf = lit::<T>(self.n as f64);
        let hn = self.h.powi(self.n as i32);
        let hi = if i + 1 == self.len {
            lit::<T>(i as f64)
        } else {
            lit::<T>(i as f64 + 0.5)
        };
        let lo = if i == 0 { T::zero() } else { lit::<T>(i as f64 - 0.5) };
        sigma * hn * (hi.powi(self.n as i32) - lo.powi(self.n as i32)) / nf
    }
}

impl<T: Real> Geometry<T> for RadialGrid<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn len(&self) -> usize {
        self.len
    }

    fn spacing(&self) -> T {
        self.h
    }

    fn mass(&self, i: usize) -> T {
        self.cell_mass(i)
    }

    fn is_boundary(&self, i: usize) -> bool {
        i + 1 == self.len
    }

    fn position(&self, i: usize) -> [T; 3] {
        [self.h * lit(i as f64), T::zero(), T::zero()]
    }

    fn laplacian(&self, u: &[T], out: &mut [T]) {
        assert_eq!(u.len(), self.len);
        let n = self.len;
        let h2 = self.h * self.h;
        let nm1 = self.n as i32 - 1;
        let two_n = lit::<T>(2.0 * self.n as f64);
        out[0] = two_n * (u[1] - u[0]) / h2;
        let sigma = sphere_area::<T>(self.n);
        let nf = lit::<T>(self.n as f64);
        for i in 1..n - 1 {
            let fi = lit::<T>(i as f64);
            let area_hi = (fi + lit(0.5)).powi(nm1);
            let area_lo = (fi - lit(0.5)).powi(nm1);
            // cell mass in face units: ((i+1/2)^n - (i-1/2)^n)/n
            let vol = ((fi + lit(0.5)).powi(self.n as i32) - (fi - lit(0.5)).powi(self.n as i32)) / nf;
            let _ = sigma; // areas and volume share sigma h^{n-1}, h^n; it cancels
            out[i] = (area_hi * (u[i + 1] - u[i]) - area_lo * (u[i] - u[i - 1])) / (vol * h2);
        }
        out[n - 1] = T::zero();
    }

    fn grad_sq_central(&self, u: &[T], i: usize) -> T {
        if i == 0 || i + 1 >= self.len {
            return T::zero(); // even at the center, pinned at the edge
        }
        let g = (u[i + 1] - u[i - 1]) / (lit::<T>(2.0) * self.h);
        g * g
    }
}

/// Cube `[-half, half]^n` with `side` nodes per axis and zero Dirichlet
/// boundary. Linear index runs x fastest: `i = (iz side + iy) side + ix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoxGrid<T> {
    pub n: usize,
    pub side: usize,
    pub half: T,
}

impl<T: Real> BoxGrid<T> {
    pub fn new(n: usize, half: T, side: usize) -> Result<Self, FieldError> {
        if !(1..=3).contains(&n) {
            return Err(FieldError::BadDimension(n));
        }
        if side < 5 {
            return Err(FieldError::GridTooSmall { need: 5, got: side });
        }
        Ok(Self { n, side, half })
    }

    pub fn h(&self) -> T {
        lit::<T>(2.0) * self.half / lit((self.side - 1) as f64)
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        match self.n {
            1 => [i, 0, 0],
            2 => [i % self.side, i / self.side, 0],
            _ => [i % self.side, (i / self.side) % self.side, i / (self.side * self.side)],
        }
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        match self.n {
            1 => c[0],
            2 => c[1] * self.side + c[0],
            _ => (c[2] * self.side + c[1]) * self.side + c[0],
        }
    }

    fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.side,
            _ => self.side * self.side,
        }
    }
}

impl<T: Real> Geometry<T> for BoxGrid<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn len(&self) -> usize {
        self.side.pow(self.n as u32)
    }

    fn spacing(&self) -> T {
        self.h()
    }

    fn mass(&self, _i: usize) -> T {
        self.h().powi(self.n as i32)
    }

    fn is_boundary(&self, i: usize) -> bool {
        let c = self.coords(i);
        (0..self.n).any(|a| c[a] == 0 || c[a] + 1 == self.side)
    }

    fn position(&self, i: usize) -> [T; 3] {
        let c = self.coords(i);
        let h = self.h();
        let mut p = [T::zero(); 3];
        for a in 0..self.n {
            p[a] = -self.half + h * lit(c[a] as f64);
        }
        p
    }

    fn laplacian(&self, u: &[T], out: &mut [T]) {
        assert_eq!(u.len(), self.len());
        let h2 = self.h() * self.h();
        let two = lit::<T>(2.0);
        for i in 0..u.len() {
            if self.is_boundary(i) {
                out[i] = T::zero();
                continue;
            }
            let mut acc = T::zero();
            for a in 0..self.n {
                let s = self.stride(a);
                acc += u[i + s] - two * u[i] + u[i - s];
            }
            out[i] = acc / h2;
        }
    }

    fn grad_sq_central(&self, u: &[T], i: usize) -> T {
        if self.is_boundary(i) {
            return T::zero();
        }
        let twoh = lit::<T>(2.0) * self.h();
        let mut acc = T::zero();
        for a in 0..self.n {
            let s = self.stride(a);
            let g = (u[i + s] - u[i - s]) / twoh;
            acc += g * g;
        }
        acc
    }
}

/// Runtime-selected geometry, so the CLI and the evolution code can share one
/// field type across radial and Cartesian runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub enum Grid<T> {
    Radial(RadialGrid<T>),
    Cartesian(BoxGrid<T>),
}

macro_rules! dispatch {
    ($self:ident, $g:ident => $e:expr) => {
        match $self {
            Grid::Radial($g) => $e,
            Grid::Cartesian($g) => $e,
        }
    };
}

impl<T: Real> Geometry<T> for Grid<T> {
    fn dim(&self) -> usize {
        dispatch!(self, g => g.dim())
    }
    fn len(&self) -> usize {
        dispatch!(self, g => Geometry::<T>::len(g))
    }
    fn spacing(&self) -> T {
        dispatch!(self, g => g.spacing())
    }
    fn mass(&self, i: usize) -> T {
        dispatch!(self, g => g.mass(i))
    }
    fn is_boundary(&self, i: usize) -> bool {
        dispatch!(self, g => g.is_boundary(i))
    }
    fn position(&self, i: usize) -> [T; 3] {
        dispatch!(self, g => g.position(i))
    }
    fn laplacian(&self, u: &[T], out: &mut [T]) {
        dispatch!(self, g => g.laplacian(u, out))
    }
    fn grad_sq_central(&self, u: &[T], i: usize) -> T {
        dispatch!(self, g => g.grad_sq_central(u, i))
    }
}

#[derive(Debug, Clone)]
pub struct Field<T> {
    pub grid: Grid<T>,
    pub values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        let len = grid.len();
        Field { grid, values: vec![T::zero(); len] }
    }

    pub fn from_values(grid: Grid<T>, values: Vec<T>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch { got: values.len(), want: grid.len() });
        }
        Ok(Field { grid, values })
    }

    /// The ground-state profile placed at the origin of a radial grid.
    pub fn radial_profile(grid: RadialGrid<T>, profile: &RadialProfile<T>) -> Self {
        let mut f = Field::zeros(Grid::Radial(grid));
        let last = f.values.len() - 1;
        for i in 0..last {
            let r = f.grid.position(i)[0];
            f.values[i] = profile.sample(r);
        }
        f
    }

    /// Superposition `sum_j xi(. - c_j)` on a Cartesian grid. Every center
    /// must keep at least 5 decay lengths of clearance from the boundary so
    /// the Dirichlet truncation stays in the exponential tail.
    pub fn bubbles(
        grid: BoxGrid<T>,
        profile: &RadialProfile<T>,
        centers: &[[T; 3]],
    ) -> Result<Self, FieldError> {
        let need = lit::<T>(5.0) * profile.decay_length();
        for c in centers {
            let mut clearance = T::infinity();
            for a in 0..grid.n {
                clearance = clearance.min(grid.half - c[a].abs());
            }
            if clearance < need {
                return Err(FieldError::TooCloseToBoundary {
                    center: [
                        c[0].to_f64().unwrap_or(f64::NAN),
                        c[1].to_f64().unwrap_or(f64::NAN),
                        c[2].to_f64().unwrap_or(f64::NAN),
                    ],
                    clearance: clearance.to_f64().unwrap_or(f64::NAN),
                    need: need.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let mut f = Field::zeros(Grid::Cartesian(grid));
        for i in 0..f.values.len() {
            if f.grid.is_boundary(i) {
                continue;
            }
            let p = f.grid.position(i);
            let mut v = T::zero();
            for c in centers {
                let mut d2 = T::zero();
                for a in 0..3 {
                    let d = p[a] - c[a];
                    d2 += d * d;
                }
                v += profile.sample(d2.sqrt());
            }
            f.values[i] = v;
        }
        Ok(f)
    }

    pub fn scale(&mut self, alpha: T) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> T {
        self.grid.dot(&self.values, &self.values).sqrt()
    }

    pub fn h1_norm(&self) -> T {
        let mut s = self.grid.dot(&self.values, &self.values);
        for i in 0..self.values.len() {
            s += self.grid.mass(i) * self.grid.grad_sq_central(&self.values, i);
        }
        s.sqrt()
    }

    /// `J_h(u) = -1/2 <u, Lap u>_M + sum M_i F(u_i)`. Values are clamped to
    /// the physical range `u >= 0` when evaluating the potential.
    pub fn energy(&self, nl: &Nonlinearity<T>) -> T {
        let mut lap = vec![T::zero(); self.values.len()];
        self.grid.laplacian(&self.values, &mut lap);
        let mut j = lit::<T>(-0.5) * self.grid.dot(&self.values, &lap);
        for i in 0..self.values.len() {
            j += self.grid.mass(i) * nl.big_f_raw(self.values[i].max(T::zero()));
        }
        j
    }

    /// Largest magnitude on nodes at most one cell from the boundary; a
    /// contained bubble keeps this at tail level.
    pub fn boundary_ring_max(&self) -> T {
        let mut m = T::zero();
        match &self.grid {
            Grid::Radial(g) => {
                for i in g.len.saturating_sub(2)..g.len {
                    m = m.max(self.values[i].abs());
                }
            }
            Grid::Cartesian(g) => {
                for i in 0..self.values.len() {
                    let c = g.coords(i);
                    let ring = (0..g.n).any(|a| c[a] <= 1 || c[a] + 2 >= g.side);
                    if ring {
                        m = m.max(self.values[i].abs());
                    }
                }
            }
        }
        m
    }

    /// Flat binary dump: magic, version, grid kind and shape, then the values
    /// as little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), FieldError> {
        w.write_all(b"GSFB")?;
        w.write_all(&1u32.to_le_bytes())?;
        match &self.grid {
            Grid::Radial(g) => {
                w.write_all(&0u32.to_le_bytes())?;
                w.write_all(&(g.n as u64).to_le_bytes())?;
                w.write_all(&(g.len as u64).to_le_bytes())?;
                w.write_all(&g.h.to_f64().unwrap().to_le_bytes())?;
            }
            Grid::Cartesian(g) => {
                w.write_all(&1u32.to_le_bytes())?;
                w.write_all(&(g.n as u64).to_le_bytes())?;
                w.write_all(&(g.side as u64).to_le_bytes())?;
                w.write_all(&g.half.to_f64().unwrap().to_le_bytes())?;
            }
        }
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_f64().unwrap().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, FieldError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"GSFB" {
            return Err(FieldError::Parse("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) != 1 {
            return Err(FieldError::Parse("unsupported version".into()));
        }
        r.read_exact(&mut u32buf)?;
        let kind = u32::from_le_bytes(u32buf);
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let shape = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let geom = f64::from_le_bytes(u64buf);
        let grid = match kind {
            0 => Grid::Radial(
                RadialGrid::new(n, T::from_f64(geom).unwrap(), shape)
                    .map_err(|e| FieldError::Parse(e.to_string()))?,
            ),
            1 => Grid::Cartesian(
                BoxGrid::new(n, T::from_f64(geom).unwrap(), shape)
                    .map_err(|e| FieldError::Parse(e.to_string()))?,
            ),
            _ => return Err(FieldError::Parse(format!("unknown grid kind {kind}"))),
        };
        r.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;
        if count != grid.len() {
            return Err(FieldError::Parse(format!(
                "value count {count} does not match grid size {}",
                grid.len()
            )));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut u64buf)?;
            values.push(
                T::from_f64(f64::from_le_bytes(u64buf))
                    .ok_or_else(|| FieldError::Parse("value out of range".into()))?,
            );
        }
        Ok(Field { grid, values })
    }

    /// Two-column CSV for radial fields, same shape as the profile files.
    pub fn write_radial_csv<W: Write>(&self, mut w: W, extra: &[(&str, String)]) -> Result<(), FieldError> {
        let g = match &self.grid {
            Grid::Radial(g) => g,
            Grid::Cartesian(_) => return Err(FieldError::Parse("not a radial field".into())),
        };
        writeln!(w, "# n = {}", g.n)?;
        writeln!(w, "# h = {:e}", g.h)?;
        for (k, v) in extra {
            writeln!(w, "# {} = {}", k, v)?;
        }
        writeln!(w, "r,u")?;
        for i in 0..self.values.len() {
            writeln!(w, "{:e},{:e}", g.h * lit::<T>(i as f64), self.values[i])?;
        }
        Ok(())
    }

    pub fn read_radial_csv<R: BufRead>(r: R) -> Result<Self, FieldError> {
        let mut n: Option<usize> = None;
        let mut h: Option<T> = None;
        let mut vals: Vec<T> = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line == "r,u" {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    match k.trim() {
                        "n" => n = v.trim().parse().ok(),
                        "h" => h = v.trim().parse::<f64>().ok().and_then(T::from_f64),
                        _ => {}
                    }
                }
                continue;
            }
            let (_, b) = line
                .split_once(',')
                .ok_or_else(|| FieldError::Parse(format!("bad row: {line}")))?;
            vals.push(
                b.trim()
                    .parse::<f64>()
                    .ok()
                    .and_then(T::from_f64)
                    .ok_or_else(|| FieldError::Parse(format!("bad value: {b}")))?,
            );
        }
        let n = n.ok_or_else(|| FieldError::Parse("missing n".into()))?;
        let h = h.ok_or_else(|| FieldError::Parse("missing h".into()))?;
        let grid = RadialGrid::new(n, h, vals.len()).map_err(|e| FieldError::Parse(e.to_string()))?;
        Ok(Field { grid: Grid::Radial(grid), values: vals })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian_field(n: usize, h: f64, len: usize) -> Field<f64> {
        let grid = RadialGrid::new(n, h, len).unwrap();
        let mut f = Field::zeros(Grid::Radial(grid));
        for i in 0..len - 1 {
            let r = h * i as f64;
            f.values[i] = (-r * r).exp();
        }
        f
    }

    #[test]
    fn radial_quadrature_converges_at_second_order() {
        // ||e^{-r^2}||_{L^2(R^3)}^2 = (pi/2)^{3/2}
        let exact = (std::f64::consts::PI / 2.0).powf(1.5);
        let coarse = {
            let f = gaussian_field(3, 0.1, 101);
            (f.l2_norm().powi(2) - exact).abs()
        };
        let fine = {
            let f = gaussian_field(3, 0.05, 201);
            (f.l2_norm().powi(2) - exact).abs()
        };
        assert!(coarse < 1e-2, "coarse error {coarse}");
        assert!(fine < coarse / 3.0, "no second-order gain: {coarse} -> {fine}");
    }

    #[test]
    fn laplacians_are_self_adjoint_in_weighted_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // radial, n = 3
        let g = RadialGrid::new(3, 0.05, 120).unwrap();
        let len = Geometry::<f64>::len(&g);
        let mut u = vec![0.0; len];
        let mut v = vec![0.0; len];
        for i in 0..len - 1 {
            u[i] = rng.gen_range(-1.0..1.0);
            v[i] = rng.gen_range(-1.0..1.0);
        }
        let (mut lu, mut lv) = (vec![0.0; len], vec![0.0; len]);
        g.laplacian(&u, &mut lu);
        g.laplacian(&v, &mut lv);
        let a = g.dot(&lu, &v);
        let b = g.dot(&u, &lv);
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "radial asymmetry {a} vs {b}");

        // cartesian, n = 2
        let g = BoxGrid::new(2, 3.0, 31).unwrap();
        let len = Geometry::<f64>::len(&g);
        let mut u = vec![0.0; len];
        let mut v = vec![0.0; len];
        for i in 0..len {
            if !g.is_boundary(i) {
                u[i] = rng.gen_range(-1.0..1.0);
                v[i] = rng.gen_range(-1.0..1.0);
            }
        }
        let (mut lu, mut lv) = (vec![0.0; len], vec![0.0; len]);
        g.laplacian(&u, &mut lu);
        g.laplacian(&v, &mut lv);
        let a = g.dot(&lu, &v);
        let b = g.dot(&u, &lv);
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "cartesian asymmetry {a} vs {b}");
    }

    #[test]
    fn cartesian_laplacian_exact_on_quadratics() {
        let g = BoxGrid::new(3, 2.0, 17).unwrap();
        let len = Geometry::<f64>::len(&g);
        let mut u = vec![0.0; len];
        for i in 0..len {
            let p = g.position(i);
            u[i] = p[0] * p[0] + 2.0 * p[1] * p[1] - 0.5 * p[2] * p[2];
        }
        let mut lap = vec![0.0; len];
        g.laplacian(&u, &mut lap);
        for i in 0..len {
            if !g.is_boundary(i) {
                assert!((lap[i] - 5.0).abs() < 1e-10, "node {i}: {}", lap[i]);
            }
        }
    }

    #[test]
    fn energy_matches_closed_form_soliton() {
        // For f(t) = t - t^3 in one dimension, J(xi) = 4/3.
        let nl = Nonlinearity::<f64>::new(1.0, &[(1.0, 3.0)]).unwrap();
        let p = crate::ground_state::shoot(&nl, 1, 20.0, 2e-3, 1e-14).unwrap();
        let grid = RadialGrid::new(1, 0.02, 1001).unwrap();
        let f = Field::radial_profile(grid, &p);
        let j = f.energy(&nl);
        assert!((j - 4.0 / 3.0).abs() < 1e-3, "J = {j}");
        // and the grid refinement shrinks the defect
        let grid2 = RadialGrid::new(1, 0.01, 2001).unwrap();
        let f2 = Field::radial_profile(grid2, &p);
        let j2 = f2.energy(&nl);
        assert!((j2 - 4.0 / 3.0).abs() < (j - 4.0 / 3.0).abs());
    }

    #[test]
    fn bubble_superposition_translates_exactly_on_grid_shifts() {
        let nl = Nonlinearity::<f64>::new(1.0, &[(1.0, 2.0)]).unwrap();
        let p = crate::ground_state::shoot(&nl, 1, 20.0, 1e-2, 1e-12).unwrap();
        let g = BoxGrid::new(1, 16.0, 257).unwrap();
        let h = g.h();
        let f1 = Field::bubbles(g.clone(), &p, &[[4.0 * h, 0.0, 0.0]]).unwrap();
        let f2 = Field::bubbles(g.clone(), &p, &[[-6.0 * h, 0.0, 0.0]]).unwrap();
        // same multiset of sampled values, shifted by 10 nodes
        let len = Geometry::<f64>::len(&g);
        for i in 0..len {
            if i + 10 < len && !g.is_boundary(i) && !g.is_boundary(i + 10) {
                assert_eq!(f2.values[i], f1.values[i + 10], "index {i}");
            }
        }
        assert!((f1.l2_norm() - f2.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn bubble_clearance_is_enforced() {
        let nl = Nonlinearity::<f64>::new(1.0, &[(1.0, 2.0)]).unwrap();
        let p = crate::ground_state::shoot(&nl, 1, 20.0, 1e-2, 1e-12).unwrap();
        let g = BoxGrid::new(2, 10.0, 101).unwrap();
        let err = Field::bubbles(g.clone(), &p, &[[0.0, 7.0, 0.0]]);
        assert!(matches!(err, Err(FieldError::TooCloseToBoundary { .. })));
        let ok = Field::bubbles(g, &p, &[[0.0, 4.0, 0.0]]).unwrap();
        // six decay lengths of clearance leave only tail mass on the ring
        assert!(ok.boundary_ring_max() < 0.05 * ok.sup_norm());
    }

    #[test]
    fn binary_roundtrip_is_exact() {
        let f = gaussian_field(2, 0.1, 64);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let g = Field::<f64>::read_binary(buf.as_slice()).unwrap();
        assert_eq!(f.values, g.values);
        assert_eq!(f.grid, g.grid);

        let nl = Nonlinearity::<f64>::new(1.0, &[(1.0, 2.0)]).unwrap();
        let p = crate::ground_state::shoot(&nl, 1, 20.0, 1e-2, 1e-12).unwrap();
        let bg = BoxGrid::new(2, 10.0, 41).unwrap();
        let f = Field::bubbles(bg, &p, &[[1.0, -2.0, 0.0]]).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let g = Field::<f64>::read_binary(buf.as_slice()).unwrap();
        assert_eq!(f.values, g.values);
        assert_eq!(f.grid, g.grid);
    }

    #[test]
    fn radial_csv_roundtrip() {
        let f = gaussian_field(3, 0.05, 80);
        let mut buf = Vec::new();
        f.write_radial_csv(&mut buf, &[("seed", "42".into())]).unwrap();
        let g = Field::<f64>::read_radial_csv(buf.as_slice()).unwrap();
        assert_eq!(f.values, g.values);
        assert_eq!(f.grid, g.grid);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let f = gaussian_field(2, 0.1, 32);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        buf.truncate(buf.len() - 9);
        assert!(Field::<f64>::read_binary(buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(Field::<f64>::read_binary(buf.as_slice()).is_err());
    }
}
