//! Concrete problems: a manufactured solution with known errors and the
//! lid-driven cavity with its classical reference profiles.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::assembly::{Forcing, SolutionState};
use crate::discretization::{BoundaryData, Discretization, ElementTables};
use crate::error::{invalid, Error, Result};
use crate::mesh::BoundaryMarker;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Mms,
    Cavity,
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mms" => Ok(ProblemKind::Mms),
            "cavity" => Ok(ProblemKind::Cavity),
            _ => invalid(format!("unknown problem `{s}`")),
        }
    }
}

/// Boundary data and forcing of a problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Problem {
    pub kind: ProblemKind,
}

impl Problem {
    pub fn new(kind: ProblemKind) -> Self {
        Problem { kind }
    }

    pub fn mms() -> Self {
        Problem { kind: ProblemKind::Mms }
    }

    pub fn cavity() -> Self {
        Problem { kind: ProblemKind::Cavity }
    }

    pub fn boundary(&self) -> &'static BoundaryData {
        match self.kind {
            ProblemKind::Mms => &|_, p| mms_exact(p[0], p[1]).0,
            ProblemKind::Cavity => &cavity_boundary,
        }
    }

    pub fn forcing(&self) -> Option<&'static Forcing> {
        match self.kind {
            ProblemKind::Mms => Some(&mms_forcing),
            ProblemKind::Cavity => None,
        }
    }
}

/// Manufactured velocity and pressure.
pub fn mms_exact(x: f64, y: f64) -> ([f64; 2], f64) {
    let (s, c) = (PI * x).sin_cos();
    ([s, -PI * y * c], s * (PI * y).cos())
}

/// Gradient of the manufactured velocity, `g[c][d] = d u_c / d x_d`.
pub fn mms_velocity_gradient(x: f64, y: f64) -> [[f64; 2]; 2] {
    let (s, c) = (PI * x).sin_cos();
    [[PI * c, 0.0], [PI * PI * y * s, -PI * c]]
}

/// Momentum forcing for the manufactured pair with all coefficients equal to one.
pub fn mms_forcing(p: [f64; 2]) -> [f64; 2] {
    let [x, y] = p;
    let (s, c) = (PI * x).sin_cos();
    let (sy, cy) = (PI * y).sin_cos();
    let u = [s, -PI * y * c];
    let speed = (u[0] * u[0] + u[1] * u[1]).sqrt();
    let conv = [PI * s * c, PI * PI * y];
    let grad_p = [PI * c * cy, -PI * s * sy];
    let lap = [-PI * PI * s, PI * PI * PI * y * c];
    [
        conv[0] + grad_p[0] - lap[0] + u[0] + speed * u[0],
        conv[1] + grad_p[1] - lap[1] + u[1] + speed * u[1],
    ]
}

/// Unit tangential velocity on the lid, no slip elsewhere.
pub fn cavity_boundary(marker: BoundaryMarker, _p: [f64; 2]) -> [f64; 2] {
    match marker {
        BoundaryMarker::Top => [1.0, 0.0],
        _ => [0.0, 0.0],
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub l2_u: f64,
    pub h1_u: f64,
    pub l2_p: f64,
}

/// Quadrature points per direction for error norms.
pub const ERROR_QUADRATURE: usize = 3;

/// Errors against the manufactured solution; the pressure is compared modulo a constant.
pub fn error_norms(disc: &Discretization, state: &SolutionState) -> Result<ErrorNorms> {
    if state.u.len() != disc.n_velocity() || state.p.len() != disc.n_pressure() {
        return invalid("state vector lengths do not match the discretization");
    }
    let t = ElementTables::new(ERROR_QUADRATURE)?;
    let mut eu = 0.0;
    let mut eg = 0.0;
    let mut mean = 0.0;
    let mut samples = Vec::with_capacity(disc.mesh.n_active() * t.rule.len());
    for &cell in disc.mesh.active_cells() {
        let key = disc.mesh.cell(cell).key;
        let (o, h) = (key.origin(), key.side());
        let ul = disc.local_velocity(&state.u, cell);
        let pl = disc.local_pressure(&state.p, cell);
        for q in 0..t.rule.len() {
            let xi = t.rule.points[q];
            let (x, y) = (o[0] + h * xi[0], o[1] + h * xi[1]);
            let jxw = t.rule.weights[q] * h * h;
            let (ue, pe) = mms_exact(x, y);
            let ge = mms_velocity_gradient(x, y);
            let mut uh = [0.0; 2];
            let mut gh = [[0.0; 2]; 2];
            for a in 0..9 {
                let n = t.q2.value(q, a);
                let g = t.q2.grad(q, a);
                for c in 0..2 {
                    let v = ul[c * 9 + a];
                    uh[c] += v * n;
                    gh[c][0] += v * g[0] / h;
                    gh[c][1] += v * g[1] / h;
                }
            }
            let ph: f64 = (0..4).map(|k| pl[k] * t.q1.value(q, k)).sum();
            for c in 0..2 {
                eu += (uh[c] - ue[c]).powi(2) * jxw;
                for d in 0..2 {
                    eg += (gh[c][d] - ge[c][d]).powi(2) * jxw;
                }
            }
            mean += (ph - pe) * jxw;
            samples.push((ph - pe, jxw));
        }
    }
    let ep: f64 = samples.iter().map(|(d, w)| (d - mean).powi(2) * w).sum();
    Ok(ErrorNorms { l2_u: eu.sqrt(), h1_u: (eu + eg).sqrt(), l2_p: ep.sqrt() })
}

/// Interpolates the manufactured solution into a state (pressure shifted to zero mean).
pub fn mms_interpolant(disc: &Discretization) -> SolutionState {
    let mut s = SolutionState::zeros(disc);
    for (n, p) in disc.dofs.q2_points().iter().enumerate() {
        let (u, _) = mms_exact(p[0], p[1]);
        s.u[2 * n] = u[0];
        s.u[2 * n + 1] = u[1];
    }
    for (n, p) in disc.dofs.q1_points().iter().enumerate() {
        s.p[n] = mms_exact(p[0], p[1]).1;
    }
    disc.state_constraints.velocity.distribute(&mut s.u);
    disc.state_constraints.pressure.distribute(&mut s.p);
    disc.remove_pressure_mean(&mut s.p);
    s
}

/// Samples of one velocity component along a line.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

/// `u_x` along `x = 0.5` and `u_y` along `y = 0.5` at uniformly spaced samples.
pub fn centerline_profiles(disc: &Discretization, u: &[f64], n_samples: usize) -> Result<(Profile, Profile)> {
    if n_samples < 2 {
        return invalid("need at least two samples");
    }
    let coords: Vec<f64> = (0..n_samples).map(|k| k as f64 / (n_samples - 1) as f64).collect();
    let mut ux = Vec::with_capacity(n_samples);
    let mut uy = Vec::with_capacity(n_samples);
    for &t in &coords {
        ux.push(disc.evaluate_velocity(u, [0.5, t])?[0]);
        uy.push(disc.evaluate_velocity(u, [t, 0.5])?[1]);
    }
    Ok((Profile { coords: coords.clone(), values: ux }, Profile { coords, values: uy }))
}

/// Reference values along one centerline.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTable {
    pub source: String,
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

impl ReferenceTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let source = lines
            .next()
            .and_then(|l| l.strip_prefix("# source: "))
            .ok_or_else(|| Error::Parse("missing `# source:` header".into()))?
            .to_string();
        if lines.next() != Some("coord,value") {
            return Err(Error::Parse("missing `coord,value` header".into()));
        }
        let mut coords = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let (a, b) =
                line.split_once(',').ok_or_else(|| Error::Parse(format!("line {}: expected two fields", i + 3)))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", i + 3)));
            let c = parse(a)?;
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Parse(format!("line {}: coordinate {c} outside [0, 1]", i + 3)));
            }
            coords.push(c);
            values.push(parse(b)?);
        }
        Ok(ReferenceTable { source, coords, values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# source: {}\ncoord,value\n", self.source);
        for (c, v) in self.coords.iter().zip(&self.values) {
            writeln!(s, "{c},{v}").expect("writing to a String");
        }
        s
    }
}

/// Reference centerline data of the lid-driven cavity.
#[derive(Clone, Debug, PartialEq)]
pub struct CavityReference {
    pub re: f64,
    /// `u_x` along the vertical centerline, keyed by `y`.
    pub u_x: ReferenceTable,
    /// `u_y` along the horizontal centerline, keyed by `x`.
    pub u_y: ReferenceTable,
}

pub const GHIA_RE1000_U_X: &str = include_str!("../data/ghia_re1000_u_x.csv");
pub const GHIA_RE1000_U_Y: &str = include_str!("../data/ghia_re1000_u_y.csv");
pub const GHIA_RE3200_U_X: &str = include_str!("../data/ghia_re3200_u_x.csv");
pub const GHIA_RE3200_U_Y: &str = include_str!("../data/ghia_re3200_u_y.csv");

/// Bundled benchmark profiles for `Re` in {1000, 3200}.
pub fn ghia_reference(re: f64) -> Result<CavityReference> {
    let (a, b) = if re == 1000.0 {
        (GHIA_RE1000_U_X, GHIA_RE1000_U_Y)
    } else if re == 3200.0 {
        (GHIA_RE3200_U_X, GHIA_RE3200_U_Y)
    } else {
        return invalid(format!("no bundled reference data for Re = {re}"));
    };
    Ok(CavityReference { re, u_x: ReferenceTable::parse(a)?, u_y: ReferenceTable::parse(b)? })
}

/// Largest absolute difference between the computed field and the reference points.
pub fn max_reference_deviation(disc: &Discretization, u: &[f64], reference: &CavityReference) -> Result<f64> {
    let mut dev: f64 = 0.0;
    for (&y, &v) in reference.u_x.coords.iter().zip(&reference.u_x.values) {
        dev = dev.max((disc.evaluate_velocity(u, [0.5, y])?[0] - v).abs());
    }
    for (&x, &v) in reference.u_y.coords.iter().zip(&reference.u_y.values) {
        dev = dev.max((disc.evaluate_velocity(u, [x, 0.5])?[1] - v).abs());
    }
    Ok(dev)
}

/// Default Forchheimer coefficient of the parameter study.
pub const DEFAULT_CF: f64 = 0.5;

/// The two halves of the cavity parameter study, split at `Re * Da = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    I,
    II,
}

const STUDY_RE: [f64; 3] = [10.0, 100.0, 1000.0];
const GROUP_I_DA: [f64; 3] = [2.5e-6, 2.5e-5, 2.5e-4];
const GROUP_II_DA: [f64; 3] = [2.5e-1, 2.5, 2.5e1];

/// `(Re, Da)` of test `1..=9` of a group; tests run along Da first, then Re.
pub fn study_case(group: Group, test: u8) -> Result<(f64, f64)> {
    if !(1..=9).contains(&test) {
        return invalid(format!("test number must be in 1..=9, got {test}"));
    }
    let k = usize::from(test - 1);
    let da = match group {
        Group::I => GROUP_I_DA[k % 3],
        Group::II => GROUP_II_DA[k % 3],
    };
    Ok((STUDY_RE[k / 3], da))
}

/// Parses `groupI:test9` / `groupII:test7` into `(group, test)`.
pub fn parse_preset(s: &str) -> Result<(Group, u8)> {
    let bad = || Error::InvalidInput(format!("preset `{s}` is not of the form groupI:testN or groupII:testN"));
    let (g, t) = s.split_once(':').ok_or_else(bad)?;
    let group = match g {
        "groupI" => Group::I,
        "groupII" => Group::II,
        _ => return Err(bad()),
    };
    let test: u8 = t.strip_prefix("test").and_then(|n| n.parse().ok()).ok_or_else(bad)?;
    study_case(group, test)?;
    Ok((group, test))
}
