//! Transport problem definitions: coefficient data, boundary data, a catalog
//! of ready-made cases, affine parameter decompositions, and validation of the
//! well-posedness conditions.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use crate::grid::{classify_faces, FaceClassification, Side, TensorGrid};
use crate::{Error, Result};

/// Scalar field on the domain.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Scalar function of one coordinate together with its derivative.
#[derive(Clone)]
pub struct Factor1D {
    pub eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub deriv: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

/// Advection field b.
#[derive(Clone)]
pub enum Advection {
    /// Constant vector.
    Constant(Vec<f64>),
    /// b_d depends only on coordinate x_d (divergence from the factor derivatives).
    TensorFactor(Vec<Factor1D>),
    /// General field with an explicitly supplied divergence.
    Field {
        eval: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
        divergence: ScalarFn,
    },
}

impl Advection {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Advection::Constant(b) => b.clone(),
            Advection::TensorFactor(fs) => {
                fs.iter().zip(x).map(|(f, &xi)| (f.eval)(xi)).collect()
            }
            Advection::Field { eval, .. } => eval(x),
        }
    }

    pub fn divergence(&self, x: &[f64]) -> f64 {
        match self {
            Advection::Constant(_) => 0.0,
            Advection::TensorFactor(fs) => fs.iter().zip(x).map(|(f, &xi)| (f.deriv)(xi)).sum(),
            Advection::Field { divergence, .. } => divergence(x),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Advection::Constant(_))
    }
}

/// Scalar coefficient (reaction, source).
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Field(ScalarFn),
}

impl Coefficient {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Field(f) => f(x),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            Coefficient::Field(_) => None,
        }
    }

    /// True only for the constant zero.
    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Constant(c) if *c == 0.0)
    }
}

/// A first-order transport problem b*grad(u) + c*u = f with inflow data g.
#[derive(Clone)]
pub struct TransportProblem {
    pub name: String,
    pub dim: usize,
    pub advection: Advection,
    pub reaction: Coefficient,
    pub source: Coefficient,
    /// Inflow boundary data, evaluated with full domain coordinates.
    pub inflow_data: ScalarFn,
    /// Documented jump/kink positions of g per coordinate, used to split face quadrature.
    pub g_jumps: Vec<Vec<f64>>,
    pub exact: Option<ScalarFn>,
    /// Dimension 0 is time when set; transport then includes a unit time component.
    pub is_spacetime: bool,
    /// Domain box (lower corners, upper corners).
    pub domain: (Vec<f64>, Vec<f64>),
    /// Filling time along characteristics when no axis direction certifies well-posedness.
    pub omega_filling_time: Option<f64>,
}

impl TransportProblem {
    /// Uniform grid with n cells per dimension over the problem's domain.
    pub fn grid(&self, n: usize) -> TensorGrid {
        TensorGrid::new(
            vec![n; self.dim],
            self.domain.0.clone(),
            self.domain.1.clone(),
        )
    }

    /// Face classification of a grid under this problem's advection field.
    pub fn classify(&self, grid: &TensorGrid, n_samples: usize) -> Result<FaceClassification> {
        let adv = self.advection.clone();
        classify_faces(grid, move |x| adv.eval(x), n_samples)
    }
}

/// Parameter dependence of one affine component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaForm {
    Mu,
    CosMu,
    SinMu,
    Const,
}

impl ThetaForm {
    pub fn eval(self, mu: f64) -> f64 {
        match self {
            ThetaForm::Mu => mu,
            ThetaForm::CosMu => mu.cos(),
            ThetaForm::SinMu => mu.sin(),
            ThetaForm::Const => 1.0,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            ThetaForm::Mu => "mu",
            ThetaForm::CosMu => "cos_mu",
            ThetaForm::SinMu => "sin_mu",
            ThetaForm::Const => "const",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "mu" => Ok(ThetaForm::Mu),
            "cos_mu" => Ok(ThetaForm::CosMu),
            "sin_mu" => Ok(ThetaForm::SinMu),
            "const" => Ok(ThetaForm::Const),
            other => Err(Error::BadInput(format!("unknown theta form '{other}'"))),
        }
    }
}

/// Parameter-independent building block of the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorPart {
    /// The -d/dx_d transport term.
    AdvectionDir(usize),
    /// The zeroth-order (identity embedding) term.
    Reaction,
}

/// Parameter-independent building block of the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsPart {
    /// Volume integral of the source against test functions.
    Volume,
    /// Unweighted inflow-face integral of g against test traces.
    InflowSide { dim: usize, side: Side },
}

/// One affine component: theta(mu) * scale applied to a fixed part.
#[derive(Clone)]
pub struct OperatorComponent {
    pub theta: ThetaForm,
    pub scale: f64,
    pub part: OperatorPart,
}

#[derive(Clone)]
pub struct RhsComponent {
    pub theta: ThetaForm,
    pub scale: f64,
    pub part: RhsPart,
}

/// Affine parameter decomposition B*_mu = sum theta_q(mu) * part_q, same for the rhs.
#[derive(Clone)]
pub struct AffineDecomposition {
    pub dim: usize,
    pub operator: Vec<OperatorComponent>,
    pub rhs: Vec<RhsComponent>,
    /// Admissible scalar parameter interval.
    pub parameter_box: (f64, f64),
}

impl AffineDecomposition {
    pub fn q_b(&self) -> usize {
        self.operator.len()
    }

    pub fn q_f(&self) -> usize {
        self.rhs.len()
    }

    /// Operator component weights at mu.
    pub fn theta_b(&self, mu: f64) -> Vec<f64> {
        self.operator.iter().map(|c| c.scale * c.theta.eval(mu)).collect()
    }

    /// Rhs component weights at mu.
    pub fn theta_f(&self, mu: f64) -> Vec<f64> {
        self.rhs.iter().map(|c| c.scale * c.theta.eval(mu)).collect()
    }

    /// Advection vector reproduced from the components at mu.
    pub fn advection_at(&self, mu: f64) -> Vec<f64> {
        let mut b = vec![0.0; self.dim];
        for c in &self.operator {
            if let OperatorPart::AdvectionDir(d) = c.part {
                b[d] += c.scale * c.theta.eval(mu);
            }
        }
        b
    }

    /// Reaction coefficient reproduced from the components at mu.
    pub fn reaction_at(&self, mu: f64) -> f64 {
        self.operator
            .iter()
            .filter(|c| c.part == OperatorPart::Reaction)
            .map(|c| c.scale * c.theta.eval(mu))
            .sum()
    }

    /// Midpoint of the parameter interval.
    pub fn mu_bar(&self) -> f64 {
        0.5 * (self.parameter_box.0 + self.parameter_box.1)
    }
}

/// A catalog or file problem: the transport data plus its affine structure when parametrized.
#[derive(Clone)]
pub struct CatalogProblem {
    pub problem: TransportProblem,
    pub affine: Option<AffineDecomposition>,
}

/// The problem with advection/reaction frozen at the given parameter value.
pub fn instantiate(template: &TransportProblem, affine: &AffineDecomposition, mu: f64) -> TransportProblem {
    let mut p = template.clone();
    p.advection = Advection::Constant(affine.advection_at(mu));
    p.reaction = Coefficient::Constant(affine.reaction_at(mu));
    p
}

/// Exact solution by tracing characteristics back to the inflow boundary
/// (constant advection and reaction, zero source).
fn traceback(domain: (Vec<f64>, Vec<f64>), b: Vec<f64>, c: f64, g: ScalarFn) -> ScalarFn {
    Arc::new(move |x: &[f64]| {
        let mut t_star = f64::INFINITY;
        for d in 0..b.len() {
            if b[d] > 0.0 {
                t_star = t_star.min((x[d] - domain.0[d]) / b[d]);
            } else if b[d] < 0.0 {
                t_star = t_star.min((x[d] - domain.1[d]) / b[d]);
            }
        }
        if !t_star.is_finite() {
            return 0.0;
        }
        let t_star = t_star.max(0.0);
        let z: Vec<f64> = (0..b.len()).map(|d| x[d] - t_star * b[d]).collect();
        g(&z) * (-c * t_star).exp()
    })
}

const FACE_TOL: f64 = 1e-12;

/// g for 2D problems: bottom-face profile in x, left-face profile in y, zero elsewhere.
fn g_two_sides(
    left: impl Fn(f64) -> f64 + Send + Sync + 'static,
    bottom: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> ScalarFn {
    Arc::new(move |x: &[f64]| {
        if x[0] <= FACE_TOL {
            left(x[1])
        } else if x[1] <= FACE_TOL {
            bottom(x[0])
        } else {
            0.0
        }
    })
}

/// The quartic inflow bump used by the rotating-field case, supported on [0.25, 0.75].
fn quartic_bump(t: f64) -> f64 {
    if (0.25..=0.75).contains(&t) {
        256.0 * t.powi(4) - 512.0 * t.powi(3) + 352.0 * t * t - 96.0 * t + 9.0
    } else {
        0.0
    }
}

fn constant_2d(name: &str, angle: f64, g: ScalarFn, g_jumps: Vec<Vec<f64>>) -> TransportProblem {
    let b = vec![angle.cos(), angle.sin()];
    let domain = (vec![0.0, 0.0], vec![1.0, 1.0]);
    let exact = traceback(domain.clone(), b.clone(), 0.0, g.clone());
    TransportProblem {
        name: name.to_string(),
        dim: 2,
        advection: Advection::Constant(b),
        reaction: Coefficient::Constant(0.0),
        source: Coefficient::Constant(0.0),
        inflow_data: g,
        g_jumps,
        exact: Some(exact),
        is_spacetime: false,
        domain,
        omega_filling_time: None,
    }
}

fn parametric_2d(
    name: &str,
    operator: Vec<OperatorComponent>,
    rhs: Vec<RhsComponent>,
    parameter_box: (f64, f64),
    reaction: f64,
    source: Coefficient,
    g: ScalarFn,
    g_jumps: Vec<Vec<f64>>,
) -> CatalogProblem {
    let affine = AffineDecomposition { dim: 2, operator, rhs, parameter_box };
    let mu_bar = affine.mu_bar();
    let problem = TransportProblem {
        name: name.to_string(),
        dim: 2,
        advection: Advection::Constant(affine.advection_at(mu_bar)),
        reaction: Coefficient::Constant(reaction),
        source,
        inflow_data: g,
        g_jumps,
        exact: None,
        is_spacetime: false,
        domain: (vec![0.0, 0.0], vec![1.0, 1.0]),
        omega_filling_time: None,
    };
    CatalogProblem { problem, affine: Some(affine) }
}

/// Names accepted by `catalog`.
pub fn catalog_names() -> Vec<&'static str> {
    vec![
        "1d-decay", "2d-g1", "2d-g2", "2d-g3", "2d-g3-225", "2d-const", "2d-circle",
        "tc1", "tc2", "tc3", "st-1d",
    ]
}

/// Looks up a problem by name.
pub fn catalog(name: &str) -> Result<CatalogProblem> {
    let deg30 = PI / 6.0;
    let deg225 = PI / 8.0;
    match name {
        // Reaction-decay on (0,1): b = 1, c = 2, u(0) = 1, solution exp(-2x).
        "1d-decay" => {
            let g: ScalarFn = Arc::new(|_| 1.0);
            let domain = (vec![0.0], vec![1.0]);
            let exact = traceback(domain.clone(), vec![1.0], 2.0, g.clone());
            Ok(CatalogProblem {
                problem: TransportProblem {
                    name: name.to_string(),
                    dim: 1,
                    advection: Advection::Constant(vec![1.0]),
                    reaction: Coefficient::Constant(2.0),
                    source: Coefficient::Constant(0.0),
                    inflow_data: g,
                    g_jumps: vec![vec![]],
                    exact: Some(exact),
                    is_spacetime: false,
                    domain,
                    omega_filling_time: None,
                },
                affine: None,
            })
        }
        // Transport at 30 degrees, smooth cubic inflow profile on the left face.
        "2d-g1" => {
            let left = |y: f64| {
                if y < 0.4 {
                    31.25 * y.powi(3) - 18.75 * y * y + 1.0
                } else {
                    0.0
                }
            };
            let g = g_two_sides(left, |_| 1.0);
            Ok(CatalogProblem {
                problem: constant_2d(name, deg30, g, vec![vec![], vec![0.4]]),
                affine: None,
            })
        }
        // Piecewise-linear (C0 but kinked) inflow profile.
        "2d-g2" => {
            let left = |y: f64| {
                if y < 0.2 {
                    1.0
                } else if y < 0.4 {
                    2.0 - 5.0 * y
                } else {
                    0.0
                }
            };
            let g = g_two_sides(left, |_| 1.0);
            Ok(CatalogProblem {
                problem: constant_2d(name, deg30, g, vec![vec![], vec![0.2, 0.4]]),
                affine: None,
            })
        }
        // Discontinuous inflow profile (unit step below y = 0.25).
        "2d-g3" => {
            let left = |y: f64| if y < 0.25 { 1.0 } else { 0.0 };
            let g = g_two_sides(left, |_| 1.0);
            Ok(CatalogProblem {
                problem: constant_2d(name, deg30, g, vec![vec![], vec![0.25]]),
                affine: None,
            })
        }
        // Same step profile transported at 22.5 degrees.
        "2d-g3-225" => {
            let left = |y: f64| if y < 0.25 { 1.0 } else { 0.0 };
            let g = g_two_sides(left, |_| 1.0);
            Ok(CatalogProblem {
                problem: constant_2d(name, deg225, g, vec![vec![], vec![0.25]]),
                affine: None,
            })
        }
        // Constant inflow data; the exact solution is identically one.
        "2d-const" => {
            let g: ScalarFn = Arc::new(|x: &[f64]| {
                if x[0] <= FACE_TOL || x[1] <= FACE_TOL {
                    1.0
                } else {
                    0.0
                }
            });
            Ok(CatalogProblem {
                problem: constant_2d(name, deg30, g, vec![vec![], vec![]]),
                affine: None,
            })
        }
        // Rotating field b = (1 - y, x): circular characteristics around (0, 1),
        // quartic bump entering on the left face.
        "2d-circle" => {
            let g: ScalarFn = Arc::new(|x: &[f64]| {
                if x[0] <= FACE_TOL {
                    quartic_bump(x[1])
                } else {
                    0.0
                }
            });
            let exact: ScalarFn = Arc::new(|x: &[f64]| {
                let r = (x[0] * x[0] + (1.0 - x[1]) * (1.0 - x[1])).sqrt();
                quartic_bump(1.0 - r)
            });
            Ok(CatalogProblem {
                problem: TransportProblem {
                    name: name.to_string(),
                    dim: 2,
                    advection: Advection::Field {
                        eval: Arc::new(|x: &[f64]| vec![1.0 - x[1], x[0]]),
                        divergence: Arc::new(|_| 0.0),
                    },
                    reaction: Coefficient::Constant(0.0),
                    source: Coefficient::Constant(0.0),
                    inflow_data: g,
                    g_jumps: vec![vec![], vec![0.25, 0.75]],
                    exact: Some(exact),
                    is_spacetime: false,
                    domain: (vec![0.0, 0.0], vec![1.0, 1.0]),
                    omega_filling_time: Some(FRAC_PI_2),
                },
                affine: None,
            })
        }
        // Parametrized direction b = (mu, 1), data 1 on the left face only.
        "tc1" => {
            let g: ScalarFn = Arc::new(|x: &[f64]| if x[0] <= FACE_TOL { 1.0 } else { 0.0 });
            Ok(parametric_2d(
                name,
                vec![
                    OperatorComponent { theta: ThetaForm::Mu, scale: 1.0, part: OperatorPart::AdvectionDir(0) },
                    OperatorComponent { theta: ThetaForm::Const, scale: 1.0, part: OperatorPart::AdvectionDir(1) },
                ],
                vec![
                    RhsComponent { theta: ThetaForm::Mu, scale: 1.0, part: RhsPart::InflowSide { dim: 0, side: Side::Left } },
                    RhsComponent { theta: ThetaForm::Const, scale: 1.0, part: RhsPart::InflowSide { dim: 1, side: Side::Left } },
                ],
                (0.01, 1.0),
                0.0,
                Coefficient::Constant(0.0),
                g,
                vec![vec![], vec![]],
            ))
        }
        // Parametrized angle b = (cos mu, sin mu) with reaction and unit source.
        "tc2" => {
            let g: ScalarFn = Arc::new(|_| 0.0);
            Ok(parametric_2d(
                name,
                vec![
                    OperatorComponent { theta: ThetaForm::CosMu, scale: 1.0, part: OperatorPart::AdvectionDir(0) },
                    OperatorComponent { theta: ThetaForm::SinMu, scale: 1.0, part: OperatorPart::AdvectionDir(1) },
                    OperatorComponent { theta: ThetaForm::Const, scale: 1.0, part: OperatorPart::Reaction },
                ],
                vec![RhsComponent { theta: ThetaForm::Const, scale: 1.0, part: RhsPart::Volume }],
                (0.2, FRAC_PI_2 - 0.2),
                1.0,
                Coefficient::Constant(1.0),
                g,
                vec![vec![], vec![]],
            ))
        }
        // As tc2 with discontinuous source and inflow data.
        "tc3" => {
            let g: ScalarFn = Arc::new(|x: &[f64]| if x[0] < 0.5 { 1.0 - x[1] } else { 0.0 });
            let f: ScalarFn = Arc::new(|x: &[f64]| if x[0] < x[1] { 0.5 } else { 1.0 });
            Ok(parametric_2d(
                name,
                vec![
                    OperatorComponent { theta: ThetaForm::CosMu, scale: 1.0, part: OperatorPart::AdvectionDir(0) },
                    OperatorComponent { theta: ThetaForm::SinMu, scale: 1.0, part: OperatorPart::AdvectionDir(1) },
                    OperatorComponent { theta: ThetaForm::Const, scale: 1.0, part: OperatorPart::Reaction },
                ],
                vec![
                    RhsComponent { theta: ThetaForm::CosMu, scale: 1.0, part: RhsPart::InflowSide { dim: 0, side: Side::Left } },
                    RhsComponent { theta: ThetaForm::SinMu, scale: 1.0, part: RhsPart::InflowSide { dim: 1, side: Side::Left } },
                    RhsComponent { theta: ThetaForm::Const, scale: 1.0, part: RhsPart::Volume },
                ],
                (0.2, FRAC_PI_2 - 0.2),
                1.0,
                Coefficient::Field(f),
                g,
                vec![vec![0.5], vec![]],
            ))
        }
        // Space-time advection: dimension 0 is time, a sin^2 bump moves right at speed 0.5.
        "st-1d" => {
            let g: ScalarFn = Arc::new(|x: &[f64]| {
                if x[0] <= FACE_TOL {
                    let s = (PI * x[1]).sin();
                    s * s
                } else {
                    0.0
                }
            });
            let b = vec![1.0, 0.5];
            let domain = (vec![0.0, 0.0], vec![1.0, 1.0]);
            let exact = traceback(domain.clone(), b.clone(), 0.0, g.clone());
            Ok(CatalogProblem {
                problem: TransportProblem {
                    name: name.to_string(),
                    dim: 2,
                    advection: Advection::Constant(b),
                    reaction: Coefficient::Constant(0.0),
                    source: Coefficient::Constant(0.0),
                    inflow_data: g,
                    g_jumps: vec![vec![], vec![]],
                    exact: Some(exact),
                    is_spacetime: true,
                    domain,
                    omega_filling_time: None,
                },
                affine: None,
            })
        }
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// JSON problem files
// ---------------------------------------------------------------------------

#[derive(serde::Deserialize)]
struct JsonProblem {
    name: Option<String>,
    dim: usize,
    #[serde(default)]
    b: Option<Vec<f64>>,
    #[serde(default)]
    b_affine: Option<Vec<JsonAffineEntry>>,
    #[serde(default)]
    parameter_box: Option<Vec<f64>>,
    #[serde(default)]
    c: f64,
    #[serde(default)]
    f: f64,
    #[serde(default)]
    g: Option<JsonBoundary>,
    #[serde(default)]
    exact: Option<String>,
    #[serde(default)]
    spacetime: bool,
}

#[derive(serde::Deserialize)]
struct JsonAffineEntry {
    theta: String,
    #[serde(default = "one")]
    scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(serde::Deserialize)]
struct JsonBoundary {
    #[serde(default)]
    sides: Vec<JsonSide>,
}

#[derive(serde::Deserialize)]
struct JsonSide {
    dim: usize,
    side: Side,
    /// Piecewise polynomials in the running face coordinate, tried in order.
    #[serde(default)]
    pieces: Vec<JsonPiece>,
    /// Value where no piece applies (and the whole value for 1D point faces).
    #[serde(default)]
    default: f64,
}

#[derive(serde::Deserialize)]
struct JsonPiece {
    /// Applies where the running coordinate is strictly below this bound.
    below: f64,
    /// Polynomial coefficients, constant term first.
    poly: Vec<f64>,
}

fn eval_poly(poly: &[f64], t: f64) -> f64 {
    poly.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Parses a problem from its JSON description (constant or affine data, dim <= 2).
pub fn from_json(text: &str) -> Result<CatalogProblem> {
    let j: JsonProblem = serde_json::from_str(text)?;
    if j.dim < 1 || j.dim > 2 {
        return Err(Error::BadInput(format!(
            "JSON problems support dim 1 or 2, got {}",
            j.dim
        )));
    }
    let dim = j.dim;
    let domain = (vec![0.0; dim], vec![1.0; dim]);

    // Advection: constant vector, or affine components with a parameter box.
    let (advection, affine_ops, parameter_box) = match (&j.b, &j.b_affine) {
        (Some(b), None) => {
            if b.len() != dim {
                return Err(Error::BadInput("advection length must match dim".into()));
            }
            (Advection::Constant(b.clone()), None, None)
        }
        (None, Some(entries)) => {
            if entries.len() != dim {
                return Err(Error::BadInput("b_affine needs one entry per dimension".into()));
            }
            let box_ = match j.parameter_box.as_deref() {
                Some([lo, hi]) if hi > lo => (*lo, *hi),
                _ => {
                    return Err(Error::BadInput(
                        "b_affine requires parameter_box: [lo, hi]".into(),
                    ))
                }
            };
            let mut ops = Vec::new();
            for (d, e) in entries.iter().enumerate() {
                ops.push(OperatorComponent {
                    theta: ThetaForm::from_id(&e.theta)?,
                    scale: e.scale,
                    part: OperatorPart::AdvectionDir(d),
                });
            }
            (Advection::Constant(vec![0.0; dim]), Some(ops), Some(box_))
        }
        _ => {
            return Err(Error::BadInput(
                "exactly one of 'b' (constant) or 'b_affine' must be given".into(),
            ))
        }
    };

    // Boundary data from per-side piecewise polynomials.
    let mut g_jumps = vec![Vec::new(); dim];
    let sides = j.g.map(|g| g.sides).unwrap_or_default();
    for s in &sides {
        if s.dim >= dim {
            return Err(Error::BadInput(format!("g side dim {} out of range", s.dim)));
        }
        if dim == 2 {
            let running = 1 - s.dim;
            for p in &s.pieces {
                g_jumps[running].push(p.below);
            }
        } else if !s.pieces.is_empty() {
            return Err(Error::BadInput("1D faces are points; use 'default' only".into()));
        }
    }
    for jumps in &mut g_jumps {
        jumps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        jumps.dedup();
    }
    let side_data: Vec<(usize, Side, Vec<(f64, Vec<f64>)>, f64)> = sides
        .into_iter()
        .map(|s| {
            let pieces = s.pieces.into_iter().map(|p| (p.below, p.poly)).collect();
            (s.dim, s.side, pieces, s.default)
        })
        .collect();
    let dom = domain.clone();
    let g: ScalarFn = Arc::new(move |x: &[f64]| {
        for (d, side, pieces, default) in &side_data {
            let coord = match side {
                Side::Left => dom.0[*d],
                Side::Right => dom.1[*d],
            };
            if (x[*d] - coord).abs() <= FACE_TOL {
                if x.len() == 1 {
                    return *default;
                }
                let t = x[1 - *d];
                for (below, poly) in pieces {
                    if t < *below {
                        return eval_poly(poly, t);
                    }
                }
                return *default;
            }
        }
        0.0
    });

    let mut problem = TransportProblem {
        name: j.name.unwrap_or_else(|| "json-problem".to_string()),
        dim,
        advection,
        reaction: Coefficient::Constant(j.c),
        source: Coefficient::Constant(j.f),
        inflow_data: g.clone(),
        g_jumps,
        exact: None,
        is_spacetime: j.spacetime,
        domain: domain.clone(),
        omega_filling_time: None,
    };

    let affine = if let (Some(ops), Some(box_)) = (affine_ops, parameter_box) {
        let mut operator = ops;
        if j.c != 0.0 {
            operator.push(OperatorComponent {
                theta: ThetaForm::Const,
                scale: j.c,
                part: OperatorPart::Reaction,
            });
        }
        let affine = AffineDecomposition {
            dim,
            operator,
            rhs: Vec::new(),
            parameter_box: box_,
        };
        // Rhs components: volume for a nonzero source, one per inflow side with
        // the theta of that dimension's advection (|b*n| on an axis face).
        let mut rhs = Vec::new();
        let b_bar = affine.advection_at(affine.mu_bar());
        for d in 0..dim {
            if b_bar[d] == 0.0 {
                continue;
            }
            let (side, sign) = if b_bar[d] > 0.0 { (Side::Left, 1.0) } else { (Side::Right, -1.0) };
            let comp = &affine.operator[d];
            rhs.push(RhsComponent {
                theta: comp.theta,
                scale: sign * comp.scale,
                part: RhsPart::InflowSide { dim: d, side },
            });
        }
        if j.f != 0.0 {
            rhs.push(RhsComponent { theta: ThetaForm::Const, scale: 1.0, part: RhsPart::Volume });
        }
        let affine = AffineDecomposition { rhs, ..affine };
        problem.advection = Advection::Constant(affine.advection_at(affine.mu_bar()));
        Some(affine)
    } else {
        None
    };

    if let Some(kind) = j.exact.as_deref() {
        match (kind, &problem.advection, affine.is_some()) {
            ("characteristics", Advection::Constant(b), false) if j.f == 0.0 => {
                problem.exact = Some(traceback(domain, b.clone(), j.c, g));
            }
            _ => {
                return Err(Error::BadInput(
                    "exact: 'characteristics' needs constant non-parametric b and f = 0".into(),
                ))
            }
        }
    }

    Ok(CatalogProblem { problem, affine })
}

/// Loads a JSON problem file.
pub fn from_json_file(path: &std::path::Path) -> Result<CatalogProblem> {
    from_json(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// How well-posedness in the transport sense was certified.
#[derive(Debug, Clone, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaFilling {
    /// b*k >= alpha > 0 for the (signed) coordinate direction k = sign * e_dim.
    AxisDirection { dim: usize, sign: f64, alpha: f64 },
    /// Certified by problem metadata: characteristics fill the domain in finite time.
    Metadata { time: f64 },
    Unverified,
}

/// Result of checking the well-posedness conditions on a sampled lattice.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub problem: String,
    pub passed: bool,
    /// Smallest sampled value of c - div(b)/2 (must be nonnegative).
    pub min_c_minus_half_div_b: f64,
    /// Smallest sampled |b|.
    pub min_advection_norm: f64,
    pub faces: FaceClassification,
    pub omega_filling: OmegaFilling,
    pub notes: Vec<String>,
}

/// Checks the well-posedness conditions by sampling; hard violations are errors.
pub fn validate(problem: &TransportProblem, grid: &TensorGrid, n_samples: usize) -> Result<ValidationReport> {
    let n = n_samples.max(2);
    let faces = problem.classify(grid, n)?;

    // Lattice samples of c - div(b)/2 and |b| over the closed box.
    let mut min_wp = f64::INFINITY;
    let mut min_norm = f64::INFINITY;
    let mut scale: f64 = 1.0;
    let mut axis_min = vec![[f64::INFINITY; 2]; grid.dim];
    let total = n.pow(grid.dim as u32);
    for k in 0..total {
        let mut x = vec![0.0; grid.dim];
        let mut rest = k;
        for d in (0..grid.dim).rev() {
            let i = rest % n;
            rest /= n;
            x[d] = grid.a[d] + (grid.b[d] - grid.a[d]) * i as f64 / (n - 1) as f64;
        }
        let b = problem.advection.eval(&x);
        let div = problem.advection.divergence(&x);
        let c = problem.reaction.eval(&x);
        let wp = c - 0.5 * div;
        min_wp = min_wp.min(wp);
        min_norm = min_norm.min(b.iter().map(|v| v * v).sum::<f64>().sqrt());
        scale = scale.max(c.abs()).max(div.abs());
        for d in 0..grid.dim {
            axis_min[d][0] = axis_min[d][0].min(b[d]);
            axis_min[d][1] = axis_min[d][1].min(-b[d]);
        }
    }

    if min_wp < -1e-12 * scale {
        return Err(Error::ValidationFailed(format!(
            "c - div(b)/2 takes the negative value {min_wp:.6e}"
        )));
    }

    let mut notes = Vec::new();
    let mut omega = OmegaFilling::Unverified;
    let mut best = 0.0;
    for d in 0..grid.dim {
        for (s, sign) in [(0, 1.0), (1, -1.0)] {
            if axis_min[d][s] > best {
                best = axis_min[d][s];
                omega = OmegaFilling::AxisDirection { dim: d, sign, alpha: axis_min[d][s] };
            }
        }
    }
    if matches!(omega, OmegaFilling::Unverified) {
        if let Some(t) = problem.omega_filling_time {
            omega = OmegaFilling::Metadata { time: t };
            notes.push(format!(
                "no axis direction certifies transport; problem metadata gives filling time {t:.6}"
            ));
        } else {
            notes.push("no axis direction certifies transport and no metadata is available".to_string());
        }
    }
    if min_norm <= 1e-12 {
        notes.push("advection field vanishes somewhere on the sampled lattice".to_string());
    }
    let passed = !matches!(omega, OmegaFilling::Unverified);

    Ok(ValidationReport {
        problem: problem.name.clone(),
        passed,
        min_c_minus_half_div_b: min_wp,
        min_advection_norm: min_norm,
        faces,
        omega_filling: omega,
        notes,
    })
}
