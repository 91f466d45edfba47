//! Uniform cell-centered 2D grids, scalar fields, midpoint quadrature, the
//! five-point zero-flux Laplacian, and the normalized portal profile.
//!
//! All fields live at cell centers. The Laplacian uses mirror ghost cells
//! across every boundary face, which makes the discrete operator exactly
//! conservative: the quadrature of any Laplacian is zero up to roundoff.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::g17;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must have at least 4x4 cells, got {nx}x{ny}")]
    TooCoarse { nx: usize, ny: usize },
    #[error("grid side lengths must be positive and finite, got {lx} x {ly}")]
    BadExtent { lx: f64, ly: f64 },
    #[error("field value at cell {index} is not finite")]
    NonFinite { index: usize },
    #[error("field has {got} values but the grid has {expected} cells")]
    LengthMismatch { got: usize, expected: usize },
    #[error("no cell center lies inside the portal disc")]
    EmptyPortal,
    #[error("fields are defined on different grids")]
    GridMismatch,
}

/// Uniform cell-centered grid over the rectangle `[0, lx] x [0, ly]`.
///
/// Cell `(i, j)` has center `((i + 1/2) hx, (j + 1/2) hy)` and cells are
/// stored row-major: index `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        if nx < 4 || ny < 4 {
            return Err(GridError::TooCoarse { nx, ny });
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(GridError::BadExtent { lx, ly });
        }
        Ok(Grid {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    /// `n x n` grid over the unit square.
    pub fn unit_square(n: usize) -> Result<Self, GridError> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Domain area `|Ω| = lx * ly`.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Center coordinates of cell `(i, j)`.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }
}

/// One species' values on a grid, one value per cell, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn constant(grid: Grid, value: f64) -> Result<Self, GridError> {
        Self::from_values(grid, vec![value; grid.cell_count()])
    }

    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.cell_count()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.cell_count() {
            return Err(GridError::LengthMismatch {
                got: values.len(),
                expected: grid.cell_count(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(ScalarField { grid, values })
    }

    /// Sample a function of the cell-center coordinates.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self, GridError> {
        let mut values = Vec::with_capacity(grid.cell_count());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Self::from_values(grid, values)
    }

    pub(crate) fn from_values_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.cell_count());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Midpoint-rule integral over the domain, exact for cellwise-constant fields.
pub fn quadrature(f: &ScalarField) -> f64 {
    quad_slice(&f.values, f.grid.cell_area())
}

pub(crate) fn quad_slice(values: &[f64], cell_area: f64) -> f64 {
    values.iter().sum::<f64>() * cell_area
}

/// Five-point Laplacian with mirror ghost cells across every boundary face.
///
/// The mirror ghost makes the normal difference across each boundary face
/// vanish, so the stencil realizes the zero-flux condition and the discrete
/// divergence theorem holds: `quadrature(laplacian_neumann(f)) = 0` up to
/// roundoff.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.values.len()];
    laplacian_apply(&f.grid, &f.values, &mut out);
    ScalarField::from_values_unchecked(f.grid, out)
}

pub(crate) fn laplacian_apply(grid: &Grid, src: &[f64], out: &mut [f64]) {
    let nx = grid.nx;
    let ny = grid.ny;
    let wx = 1.0 / (grid.hx * grid.hx);
    let wy = 1.0 / (grid.hy * grid.hy);
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let c = src[k];
            let mut acc = 0.0;
            if i > 0 {
                acc += (src[k - 1] - c) * wx;
            }
            if i + 1 < nx {
                acc += (src[k + 1] - c) * wx;
            }
            if j > 0 {
                acc += (src[k - nx] - c) * wy;
            }
            if j + 1 < ny {
                acc += (src[k + nx] - c) * wy;
            }
            out[k] = acc;
        }
    }
}

/// How the portal profile is shaped. Only the normalized characteristic
/// function of a disc is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PortalProfile {
    #[default]
    Characteristic,
}

/// Geometric description of the portal region: a disc intersected with the
/// domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortalSpec {
    pub center: (f64, f64),
    pub radius: f64,
    pub profile: PortalProfile,
}

impl PortalSpec {
    pub fn new(center: (f64, f64), radius: f64) -> Self {
        PortalSpec {
            center,
            radius,
            profile: PortalProfile::Characteristic,
        }
    }
}

/// Discretized portal profile together with its support mask.
///
/// The profile is the characteristic function of the covered cells, scaled
/// after discretization so that its quadrature is exactly 1 on this grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Portal {
    chi: ScalarField,
    mask: Vec<usize>,
}

impl Portal {
    pub fn chi(&self) -> &ScalarField {
        &self.chi
    }

    /// Indices of the cells whose centers lie inside the disc.
    pub fn mask(&self) -> &[usize] {
        &self.mask
    }

    /// Area of the discretized support.
    pub fn area(&self) -> f64 {
        self.mask.len() as f64 * self.chi.grid.cell_area()
    }

    pub fn chi_max(&self) -> f64 {
        self.chi.max()
    }
}

/// Discretize the portal profile by cell-center membership and normalize so
/// the quadrature equals 1.
pub fn build_chi(grid: Grid, spec: &PortalSpec) -> Result<Portal, GridError> {
    let r2 = spec.radius * spec.radius;
    let mut mask = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = grid.center(i, j);
            let dx = x - spec.center.0;
            let dy = y - spec.center.1;
            if dx * dx + dy * dy <= r2 {
                mask.push(grid.index(i, j));
            }
        }
    }
    if mask.is_empty() {
        return Err(GridError::EmptyPortal);
    }
    let mut values = vec![0.0; grid.cell_count()];
    for &k in &mask {
        values[k] = 1.0;
    }
    let raw = quad_slice(&values, grid.cell_area());
    for &k in &mask {
        values[k] = 1.0 / raw;
    }
    Ok(Portal {
        chi: ScalarField::from_values_unchecked(grid, values),
        mask,
    })
}

/// Write a field snapshot as CSV: header `x,y,value`, row-major by cell
/// center, 17 significant digits.
pub fn write_field_csv<W: Write>(f: &ScalarField, w: &mut W) -> io::Result<()> {
    writeln!(w, "x,y,value")?;
    let grid = f.grid;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = grid.center(i, j);
            writeln!(w, "{},{},{}", g17(x), g17(y), g17(f.get(i, j)))?;
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum FieldCsvError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("snapshot does not match the grid: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Read a field snapshot written by [`write_field_csv`] onto a known grid.
///
/// Cell centers in the file must match the grid's centers in row-major order.
pub fn read_field_csv<R: BufRead>(grid: Grid, r: R) -> Result<ScalarField, FieldCsvError> {
    let mut values = Vec::with_capacity(grid.cell_count());
    let mut lines = r.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == "x,y,value" => {}
        Some((_, Ok(h))) => {
            return Err(FieldCsvError::Malformed {
                line: 1,
                msg: format!("expected header 'x,y,value', got '{h}'"),
            })
        }
        Some((_, Err(e))) => return Err(FieldCsvError::Io(e)),
        None => {
            return Err(FieldCsvError::Malformed {
                line: 1,
                msg: "empty file".into(),
            })
        }
    }
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut next_f64 = |what: &str| -> Result<f64, FieldCsvError> {
            parts
                .next()
                .ok_or_else(|| FieldCsvError::Malformed {
                    line: lineno + 1,
                    msg: format!("missing {what}"),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| FieldCsvError::Malformed {
                    line: lineno + 1,
                    msg: format!("bad {what}: {e}"),
                })
        };
        let x = next_f64("x")?;
        let y = next_f64("y")?;
        let v = next_f64("value")?;
        let k = values.len();
        if k >= grid.cell_count() {
            return Err(FieldCsvError::GridMismatch(format!(
                "more than {} rows",
                grid.cell_count()
            )));
        }
        let (i, j) = (k % grid.nx, k / grid.nx);
        let (cx, cy) = grid.center(i, j);
        let tol = 1e-9 * (grid.hx + grid.hy);
        if (x - cx).abs() > tol || (y - cy).abs() > tol {
            return Err(FieldCsvError::GridMismatch(format!(
                "row {k} has center ({x}, {y}), expected ({cx}, {cy})"
            )));
        }
        values.push(v);
    }
    Ok(ScalarField::from_values(grid, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: Grid, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_fn(grid, |_, _| rng.random::<f64>() * 2.0 - 1.0).unwrap()
    }

    #[test]
    fn rejects_coarse_grid() {
        assert!(matches!(
            Grid::new(3, 64, 1.0, 1.0),
            Err(GridError::TooCoarse { .. })
        ));
        assert!(matches!(
            Grid::new(64, 2, 1.0, 1.0),
            Err(GridError::TooCoarse { .. })
        ));
    }

    #[test]
    fn rejects_bad_extent() {
        assert!(matches!(
            Grid::new(8, 8, 0.0, 1.0),
            Err(GridError::BadExtent { .. })
        ));
        assert!(matches!(
            Grid::new(8, 8, 1.0, f64::NAN),
            Err(GridError::BadExtent { .. })
        ));
    }

    #[test]
    fn cell_areas_sum_to_domain_area() {
        for (nx, ny, lx, ly) in [(4, 4, 1.0, 1.0), (64, 48, 2.5, 0.75), (17, 33, 3.0, 7.0)] {
            let grid = Grid::new(nx, ny, lx, ly).unwrap();
            let total = grid.cell_area() * grid.cell_count() as f64;
            assert!((total - grid.area()).abs() <= 1e-12 * grid.area());
        }
    }

    #[test]
    fn quadrature_of_unit_constant_is_area() {
        let grid = Grid::unit_square(32).unwrap();
        let one = ScalarField::constant(grid, 1.0).unwrap();
        assert_eq!(quadrature(&one), 1.0);
        let zero = ScalarField::zeros(grid);
        assert_eq!(quadrature(&zero), 0.0);
    }

    #[test]
    fn field_rejects_non_finite() {
        let grid = Grid::unit_square(4).unwrap();
        let mut vals = vec![0.0; 16];
        vals[7] = f64::NAN;
        assert!(matches!(
            ScalarField::from_values(grid, vals),
            Err(GridError::NonFinite { index: 7 })
        ));
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let grid = Grid::new(16, 12, 2.0, 1.5).unwrap();
        let f = ScalarField::constant(grid, 3.25).unwrap();
        let lap = laplacian_neumann(&f);
        assert!(lap.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_conserves_mass_on_random_fields() {
        for seed in 0..5 {
            let grid = Grid::new(48, 40, 1.0, 1.3).unwrap();
            let f = random_field(grid, seed);
            let total = quadrature(&laplacian_neumann(&f));
            assert!(
                total.abs() <= 1e-10 * f.max_abs().max(1.0),
                "seed {seed}: total {total}"
            );
        }
    }

    fn cosine_error(nx: usize) -> f64 {
        let grid = Grid::new(nx, 4, 1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(grid, |x, _| (PI * x).cos()).unwrap();
        let lap = laplacian_neumann(&f);
        let mut err = 0.0f64;
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, _) = grid.center(i, j);
                let exact = -PI * PI * (PI * x).cos();
                err = err.max((lap.get(i, j) - exact).abs());
            }
        }
        err
    }

    #[test]
    fn laplacian_is_second_order_on_manufactured_cosine() {
        // cos(pi x) satisfies the zero-flux condition, so the mirror ghost is
        // exact and the truncation error is O(h^2) up to the boundary.
        let e64 = cosine_error(64);
        let e128 = cosine_error(128);
        let ratio = e64 / e128;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "ratio {ratio}, errors {e64} vs {e128}"
        );
        assert!(e64 < 1e-2);
    }

    #[test]
    fn chi_on_quarter_disc_is_normalized() {
        let grid = Grid::unit_square(64).unwrap();
        let portal = build_chi(grid, &PortalSpec::new((1.0, 1.0), 0.2)).unwrap();
        assert!((quadrature(portal.chi()) - 1.0).abs() <= 1e-12);
        assert!(portal.chi().min() >= 0.0);
        assert!(!portal.mask().is_empty());
    }

    #[test]
    fn chi_vanishes_outside_mask_and_is_flat_inside() {
        let grid = Grid::unit_square(32).unwrap();
        let portal = build_chi(grid, &PortalSpec::new((0.5, 0.5), 0.25)).unwrap();
        let k = portal.mask().len() as f64;
        let expected = 1.0 / (k * grid.cell_area());
        let mask: std::collections::HashSet<usize> = portal.mask().iter().copied().collect();
        for (idx, &v) in portal.chi().values().iter().enumerate() {
            if mask.contains(&idx) {
                assert!((v - expected).abs() <= 1e-12 * expected);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn chi_covering_single_cell() {
        let grid = Grid::unit_square(8).unwrap();
        // Disc small enough that only the cell containing its center is hit.
        let (cx, cy) = grid.center(3, 5);
        let portal = build_chi(grid, &PortalSpec::new((cx, cy), 0.4 * grid.hx())).unwrap();
        assert_eq!(portal.mask(), &[grid.index(3, 5)]);
        let v = portal.chi().get(3, 5);
        assert!((v - 1.0 / grid.cell_area()).abs() <= 1e-12 / grid.cell_area());
    }

    #[test]
    fn chi_outside_domain_is_empty() {
        let grid = Grid::unit_square(16).unwrap();
        assert!(matches!(
            build_chi(grid, &PortalSpec::new((5.0, 5.0), 0.2)),
            Err(GridError::EmptyPortal)
        ));
    }

    #[test]
    fn field_csv_round_trip() {
        let grid = Grid::new(6, 5, 1.0, 2.0).unwrap();
        let f = random_field(grid, 42);
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let back = read_field_csv(grid, buf.as_slice()).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn field_csv_rejects_wrong_grid() {
        let grid = Grid::new(6, 5, 1.0, 2.0).unwrap();
        let f = random_field(grid, 7);
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let other = Grid::new(5, 6, 1.0, 2.0).unwrap();
        assert!(read_field_csv(other, buf.as_slice()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn laplacian_quadrature_is_zero(seed in 0u64..1000, nx in 4usize..24, ny in 4usize..24) {
            let grid = Grid::new(nx, ny, 1.0, 1.0).unwrap();
            let f = random_field(grid, seed);
            let total = quadrature(&laplacian_neumann(&f));
            prop_assert!(total.abs() <= 1e-10 * f.max_abs().max(1.0));
        }

        #[test]
        fn chi_is_normalized_for_random_portals(
            cx in 0.0f64..1.2, cy in 0.0f64..1.2, r in 0.05f64..0.5, n in 8usize..48
        ) {
            let grid = Grid::unit_square(n).unwrap();
            if let Ok(portal) = build_chi(grid, &PortalSpec::new((cx, cy), r)) {
                prop_assert!((quadrature(portal.chi()) - 1.0).abs() <= 1e-12);
                prop_assert!(portal.chi().min() >= 0.0);
            }
        }
    }
}
