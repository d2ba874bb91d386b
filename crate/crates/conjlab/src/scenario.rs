//! Scenario registry, configuration and the end-to-end pipeline that turns a
//! scenario into a report: base trajectories, energies, conjugate points,
//! correspondence checks, branch tracing, scans and verdicts.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use crate::bifurcation::{
    self, Branch, Certificate, CertificateVariant, Classification, ScanEvidence, ScanParams,
    ScanRow, SignVariant,
};
use crate::dynamics::{
    self, conformal_energy, integrate_geodesic, integrate_pgeodesic, mechanical_energy, Tolerances,
};
use crate::fields::{parse, ScalarField};
use crate::geometry::{ConformalMetric, MechanicalSystem, Signature, System};
use crate::report::{
    BranchRecord, CertificateRecord, ConjugateVerdict, CorrespondenceSummary, EnergyRecord,
    EquationSet, Report, ToleranceInfo, Verdict,
};
use crate::variational::{conjugate_points, ConjugatePoint};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Mechanical,
    Conformal,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Mechanical => "mechanical",
            ScenarioKind::Conformal => "conformal",
        }
    }
}

/// A certificate evaluation attached to a scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateProbe {
    pub label: String,
    pub w: [f64; 2],
    pub lambda: f64,
}

/// Full configuration of one numerical experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub kind: ScenarioKind,
    pub signature_text: String,
    /// Potential (mechanical) or conformal exponent (conformal), in the
    /// prefix expression grammar.
    pub field_text: String,
    pub q0: [f64; 3],
    pub v0: [f64; 3],
    pub interval: (f64, f64),
    pub conjugate_window: (f64, f64),
    pub sign_variant: SignVariant,
    /// Correspondence energy `c` (conformal scenarios).
    pub energy_c: f64,
    /// Axis p-geodesic initial velocity in the mechanical picture.
    pub mech_v0: [f64; 3],
    pub mech_interval: (f64, f64),
    pub mech_conjugate_window: (f64, f64),
    /// Additional base curve normalized to unit energy, if the printed one
    /// is not.
    pub rescaled_v0: Option<[f64; 3]>,
    /// Whether the printed equations flip the potential sign relative to the
    /// derived ones.
    pub printed_flip: bool,
    pub branch_rays: Vec<[f64; 2]>,
    pub branch_alphas: Vec<f64>,
    pub branch_window: (f64, f64),
    pub scan: ScanParams,
    pub certificate_variant: CertificateVariant,
    pub certificate_weight_text: String,
    pub certificate_probes: Vec<CertificateProbe>,
    pub tol: Tolerances,
    pub notes: Vec<String>,
}

fn v_old_text() -> String {
    "(+ (* 1/2 (^ x 2)) (* -1/2 (^ y 2)) (* 1/3 (^ x 3) (^ y 3)))".into()
}

fn rho_old_text() -> String {
    "(+ (* -1/2 (^ x 2)) (* 1/2 (^ y 2)) (* 1/3 (^ x 3) (^ y 3)))".into()
}

fn v_new_text() -> String {
    "(+ (* -1/2 (^ x 2)) (* 1/2 (^ y 2)) (* (^ x 3) y) (* x (^ y 3)))".into()
}

fn rho_new_text() -> String {
    "(+ (* 1/2 (^ x 2)) (* -1/2 (^ y 2)) (* (^ x 3) y) (* x (^ y 3)))".into()
}

pub const BUILTIN_IDS: [&str; 4] = [
    "mpp-perturbed",
    "mpp-conformal",
    "new-perturbed",
    "new-conformal",
];

/// Short description per built-in scenario, for `list`.
pub fn builtin_summaries() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "mpp-perturbed",
            "perturbed geodesics on (+-+) flat space; conjugate point at pi bifurcates with two families",
        ),
        (
            "mpp-conformal",
            "conformally flat (+-+) metric; reduced mechanical picture bifurcates at pi/sqrt(2)",
        ),
        (
            "new-perturbed",
            "perturbed geodesics on Minkowski (-++); conjugate point at pi certified non-bifurcating",
        ),
        (
            "new-conformal",
            "conformally flat Minkowski metric; conjugate point at (0,0,pi) certified non-bifurcating",
        ),
    ]
}

pub fn builtin(id: &str) -> Option<Scenario> {
    let t_red = PI / SQRT_2;
    match id {
        "mpp-perturbed" => Some(Scenario {
            id: id.into(),
            kind: ScenarioKind::Mechanical,
            signature_text: "+-+".into(),
            field_text: v_old_text(),
            q0: [0.0; 3],
            v0: [0.0, 0.0, 1.0],
            interval: (0.0, 2.0 * PI),
            conjugate_window: (0.0, 2.0 * PI),
            sign_variant: SignVariant::Derived,
            energy_c: 0.0,
            mech_v0: [0.0, 0.0, 1.0],
            mech_interval: (0.0, 2.0 * PI),
            mech_conjugate_window: (0.0, 2.0 * PI),
            rescaled_v0: None,
            printed_flip: false,
            branch_rays: vec![[1.0, 0.0], [0.0, 1.0]],
            branch_alphas: vec![0.4, 0.2, 0.1, 0.05, 0.025],
            branch_window: (2.6, 3.7),
            scan: ScanParams {
                window: (PI - 0.3, PI + 0.3),
                ..ScanParams::around(PI)
            },
            certificate_variant: CertificateVariant::Mpp,
            certificate_weight_text: format!("(exp2 {})", rho_old_text()),
            certificate_probes: vec![CertificateProbe {
                label: "u-family alpha=0.3 over [0,pi]".into(),
                w: [0.3, 0.0],
                lambda: PI,
            }],
            tol: Tolerances::default(),
            notes: vec![
                "the families (alpha sin t, 0, t) and (0, alpha sin t, t) solve the system for \
                 every alpha; the certificate integrand x^2 y^4 + x^4 y^2 vanishes along them, \
                 so it cannot exclude nontrivial solutions"
                    .into(),
            ],
        }),
        "mpp-conformal" => Some(Scenario {
            id: id.into(),
            kind: ScenarioKind::Conformal,
            signature_text: "+-+".into(),
            field_text: rho_old_text(),
            q0: [0.0; 3],
            v0: [0.0, 0.0, SQRT_2],
            interval: (0.0, 2.0 * PI),
            conjugate_window: (0.0, 3.6),
            sign_variant: SignVariant::Derived,
            energy_c: 0.0,
            mech_v0: [0.0, 0.0, SQRT_2],
            mech_interval: (0.0, 3.7),
            mech_conjugate_window: (0.0, 3.0),
            rescaled_v0: Some([0.0, 0.0, 1.0 / PI.sqrt()]),
            printed_flip: false,
            branch_rays: vec![[1.0, 0.0]],
            branch_alphas: vec![0.4, 0.2, 0.1, 0.05, 0.025],
            branch_window: (1.5, 3.6),
            scan: ScanParams {
                window: (t_red - 0.3, t_red + 0.3),
                grid_n: 32,
                ..ScanParams::around(t_red)
            },
            certificate_variant: CertificateVariant::Mpp,
            certificate_weight_text: format!("(exp2 {})", rho_old_text()),
            certificate_probes: vec![CertificateProbe {
                label: "family probe w=(0.2,0) at the conjugate parameter".into(),
                w: [0.2, 0.0],
                lambda: t_red,
            }],
            tol: Tolerances::default(),
            notes: vec![
                "the base curve (0,0,sqrt(2) t) over [0,2pi] has conformal energy 2pi, not 1; a \
                 rescaled curve (0,0,t/sqrt(pi)) with energy 1 is reported alongside"
                    .into(),
                "verdicts concern the mechanical picture (energy-0 trajectories of the potential \
                 -exp(2 rho)); whether the geodesic problem itself bifurcates at (0,0,pi) is \
                 exploratory and not asserted"
                    .into(),
                "the reduction derivation yields certificate weight exp(2 rho); the weight \
                 exp(rho) seen in print is not used (the vanishing on y=0 is unaffected)"
                    .into(),
            ],
        }),
        "new-perturbed" => Some(Scenario {
            id: id.into(),
            kind: ScenarioKind::Mechanical,
            signature_text: "-++".into(),
            field_text: v_new_text(),
            q0: [0.0; 3],
            v0: [0.0, 0.0, 1.0],
            interval: (0.0, 2.0 * PI),
            conjugate_window: (0.0, 2.0 * PI),
            sign_variant: SignVariant::Derived,
            energy_c: 0.0,
            mech_v0: [0.0, 0.0, 1.0],
            mech_interval: (0.0, 2.0 * PI),
            mech_conjugate_window: (0.0, 2.0 * PI),
            rescaled_v0: None,
            printed_flip: false,
            branch_rays: vec![],
            branch_alphas: vec![0.4, 0.2, 0.1, 0.05, 0.025],
            branch_window: (2.6, 3.7),
            scan: ScanParams {
                window: (PI - 0.3, PI + 0.3),
                ..ScanParams::around(PI)
            },
            certificate_variant: CertificateVariant::New,
            certificate_weight_text: "1".into(),
            certificate_probes: vec![CertificateProbe {
                label: "positivity probe w=(0.1,0.1) over [0,pi]".into(),
                w: [0.1, 0.1],
                lambda: PI,
            }],
            tol: Tolerances::default(),
            notes: vec![
                "the certificate integrand x^4 + y^4 + 6 x^2 y^2 is pointwise nonnegative and \
                 vanishes only at x = y = 0, so any pinned solution of the system is trivial"
                    .into(),
            ],
        }),
        "new-conformal" => Some(Scenario {
            id: id.into(),
            kind: ScenarioKind::Conformal,
            signature_text: "-++".into(),
            field_text: rho_new_text(),
            q0: [0.0; 3],
            v0: [0.0, 0.0, 1.0 / PI.sqrt()],
            interval: (0.0, 2.0 * PI),
            conjugate_window: (0.0, 2.0 * PI),
            sign_variant: SignVariant::Derived,
            energy_c: 0.0,
            mech_v0: [0.0, 0.0, SQRT_2],
            mech_interval: (0.0, 2.6),
            mech_conjugate_window: (0.0, 2.45),
            rescaled_v0: None,
            printed_flip: true,
            branch_rays: vec![],
            branch_alphas: vec![0.4, 0.2, 0.1, 0.05, 0.025],
            branch_window: (1.5, 3.6),
            scan: ScanParams {
                window: (t_red - 0.3, t_red + 0.3),
                ..ScanParams::around(t_red)
            },
            certificate_variant: CertificateVariant::New,
            certificate_weight_text: format!("(* 2 (exp2 {}))", rho_new_text()),
            certificate_probes: vec![CertificateProbe {
                label: "positivity probe w=(0.1,0.1) at the conjugate parameter".into(),
                w: [0.1, 0.1],
                lambda: t_red,
            }],
            tol: Tolerances::default(),
            notes: vec![
                "the printed equations carry the opposite sign on the potential terms relative \
                 to the gradient of -exp(2 rho) in signature (-++); both variants are run and \
                 the certificate integrand is identical under either"
                    .into(),
            ],
        }),
        _ => None,
    }
}

/// Resolves a built-in id or a scenario file path.
pub fn resolve(id_or_path: &str) -> Result<Scenario> {
    if let Some(s) = builtin(id_or_path) {
        return Ok(s);
    }
    let path = Path::new(id_or_path);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return parse_scenario_file(&text);
    }
    Err(Error::UnknownScenario {
        id: id_or_path.into(),
        available: BUILTIN_IDS.join(", "),
    })
}

fn parse_f64(key: &str, v: &str, line: usize) -> Result<f64> {
    let v = v.trim();
    let parsed = if let Some((a, b)) = v.split_once('/') {
        match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(a), Ok(b)) if b != 0.0 => Some(a / b),
            _ => None,
        }
    } else {
        v.parse::<f64>().ok()
    };
    parsed.ok_or_else(|| Error::Parse {
        pos: line,
        msg: format!("key '{key}': expected a number, got '{v}'"),
    })
}

fn split_numbers(v: &str) -> Vec<&str> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_vec3(key: &str, v: &str, line: usize) -> Result<[f64; 3]> {
    let parts = split_numbers(v);
    if parts.len() != 3 {
        return Err(Error::Parse {
            pos: line,
            msg: format!("key '{key}': expected three numbers"),
        });
    }
    Ok([
        parse_f64(key, parts[0], line)?,
        parse_f64(key, parts[1], line)?,
        parse_f64(key, parts[2], line)?,
    ])
}

fn parse_pair(key: &str, v: &str, line: usize) -> Result<(f64, f64)> {
    let parts = split_numbers(v);
    if parts.len() != 2 {
        return Err(Error::Parse {
            pos: line,
            msg: format!("key '{key}': expected two numbers"),
        });
    }
    Ok((
        parse_f64(key, parts[0], line)?,
        parse_f64(key, parts[1], line)?,
    ))
}

fn parse_list(key: &str, v: &str, line: usize) -> Result<Vec<f64>> {
    split_numbers(v)
        .into_iter()
        .map(|s| parse_f64(key, s, line))
        .collect()
}

/// Applies one `key = value` assignment to a scenario.
pub fn apply_assignment(sc: &mut Scenario, key: &str, value: &str, line: usize) -> Result<()> {
    let v = value.trim();
    match key {
        "id" => sc.id = v.into(),
        "kind" => {
            sc.kind = match v {
                "mechanical" => ScenarioKind::Mechanical,
                "conformal" => ScenarioKind::Conformal,
                _ => {
                    return Err(Error::Parse {
                        pos: line,
                        msg: format!("kind must be 'mechanical' or 'conformal', got '{v}'"),
                    })
                }
            }
        }
        "signature" => {
            Signature::parse(v)?;
            sc.signature_text = v.into();
        }
        "potential" | "rho" => {
            parse(v)?;
            sc.field_text = v.into();
        }
        "q0" => sc.q0 = parse_vec3(key, v, line)?,
        "v0" => sc.v0 = parse_vec3(key, v, line)?,
        "interval" => sc.interval = parse_pair(key, v, line)?,
        "conjugate_window" => sc.conjugate_window = parse_pair(key, v, line)?,
        "sign_variant" => {
            sc.sign_variant = match v {
                "derived" => SignVariant::Derived,
                "printed" => SignVariant::Printed,
                _ => {
                    return Err(Error::Parse {
                        pos: line,
                        msg: format!("sign_variant must be 'derived' or 'printed', got '{v}'"),
                    })
                }
            }
        }
        "energy_c" => sc.energy_c = parse_f64(key, v, line)?,
        "mech_v0" => sc.mech_v0 = parse_vec3(key, v, line)?,
        "mech_interval" => sc.mech_interval = parse_pair(key, v, line)?,
        "mech_conjugate_window" => sc.mech_conjugate_window = parse_pair(key, v, line)?,
        "rescaled_v0" => sc.rescaled_v0 = Some(parse_vec3(key, v, line)?),
        "printed_flip" => {
            sc.printed_flip = match v {
                "true" => true,
                "false" => false,
                _ => {
                    return Err(Error::Parse {
                        pos: line,
                        msg: format!("printed_flip must be 'true' or 'false', got '{v}'"),
                    })
                }
            }
        }
        "branch_rays" => {
            let mut rays = Vec::new();
            for part in v.split(';').filter(|s| !s.trim().is_empty()) {
                let p = parse_pair(key, part, line)?;
                rays.push([p.0, p.1]);
            }
            sc.branch_rays = rays;
        }
        "branch_alphas" => sc.branch_alphas = parse_list(key, v, line)?,
        "branch_window" => sc.branch_window = parse_pair(key, v, line)?,
        "scan_window" => sc.scan.window = parse_pair(key, v, line)?,
        "scan_lambda_samples" => sc.scan.lambda_samples = parse_f64(key, v, line)? as usize,
        "scan_radius" => sc.scan.radius = parse_f64(key, v, line)?,
        "scan_grid" => sc.scan.grid_n = parse_f64(key, v, line)? as usize,
        "scan_seeds" => sc.scan.newton_seeds = parse_f64(key, v, line)? as usize,
        "scan_seed_radius" => sc.scan.seed_radius = parse_f64(key, v, line)?,
        "scan_shoot_tol" => sc.scan.shoot_tol = parse_f64(key, v, line)?,
        "scan_max_iter" => sc.scan.max_iter = parse_f64(key, v, line)? as usize,
        "scan_miss_floor" => sc.scan.miss_floor = parse_f64(key, v, line)?,
        "scan_nontrivial_threshold" => sc.scan.nontrivial_threshold = parse_f64(key, v, line)?,
        "certificate_variant" => {
            sc.certificate_variant = match v {
                "mpp" => CertificateVariant::Mpp,
                "new" => CertificateVariant::New,
                _ => {
                    return Err(Error::Parse {
                        pos: line,
                        msg: format!("certificate_variant must be 'mpp' or 'new', got '{v}'"),
                    })
                }
            }
        }
        "certificate_weight" => {
            parse(v)?;
            sc.certificate_weight_text = v.into();
        }
        "tol" => sc.tol = Tolerances::from_scalar(parse_f64(key, v, line)?),
        "rtol" => sc.tol.rtol = parse_f64(key, v, line)?,
        "atol" => sc.tol.atol = parse_f64(key, v, line)?,
        "note" => sc.notes.push(v.into()),
        _ => {
            return Err(Error::Parse {
                pos: line,
                msg: format!("unknown key '{key}'"),
            })
        }
    }
    Ok(())
}

/// Parses a scenario file: `key = value` lines plus `#` comments. Unset keys
/// take the defaults of a blank mechanical scenario.
pub fn parse_scenario_file(text: &str) -> Result<Scenario> {
    let mut sc = Scenario {
        id: "user-scenario".into(),
        kind: ScenarioKind::Mechanical,
        signature_text: "+++".into(),
        field_text: "0".into(),
        q0: [0.0; 3],
        v0: [0.0, 0.0, 1.0],
        interval: (0.0, 2.0 * PI),
        conjugate_window: (0.0, 2.0 * PI),
        sign_variant: SignVariant::Derived,
        energy_c: 0.0,
        mech_v0: [0.0, 0.0, SQRT_2],
        mech_interval: (0.0, 2.0 * PI),
        mech_conjugate_window: (0.0, 2.0 * PI),
        rescaled_v0: None,
        printed_flip: false,
        branch_rays: vec![],
        branch_alphas: vec![0.4, 0.2, 0.1, 0.05, 0.025],
        branch_window: (0.5, 2.0 * PI),
        scan: ScanParams::around(PI),
        certificate_variant: CertificateVariant::New,
        certificate_weight_text: "1".into(),
        certificate_probes: vec![],
        tol: Tolerances::default(),
        notes: vec![],
    };
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            pos: n + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        apply_assignment(&mut sc, key.trim(), value, n + 1)?;
    }
    Ok(sc)
}

/// Applies `--set key=value` overrides.
pub fn apply_overrides(sc: &mut Scenario, sets: &[String]) -> Result<()> {
    for (n, s) in sets.iter().enumerate() {
        let (key, value) = s.split_once('=').ok_or_else(|| Error::Parse {
            pos: n,
            msg: format!("override must be key=value, got '{s}'"),
        })?;
        apply_assignment(sc, key.trim(), value, n)?;
    }
    Ok(())
}

/// Renders a scenario in the file format (re-parseable).
pub fn describe(sc: &Scenario) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    let fmt3 = |v: [f64; 3]| format!("{} {} {}", v[0], v[1], v[2]);
    let fmt2 = |v: (f64, f64)| format!("{} {}", v.0, v.1);
    kv("id", sc.id.clone());
    kv("kind", sc.kind.name().into());
    kv("signature", sc.signature_text.clone());
    kv(
        match sc.kind {
            ScenarioKind::Mechanical => "potential",
            ScenarioKind::Conformal => "rho",
        },
        sc.field_text.clone(),
    );
    kv("q0", fmt3(sc.q0));
    kv("v0", fmt3(sc.v0));
    kv("interval", fmt2(sc.interval));
    kv("conjugate_window", fmt2(sc.conjugate_window));
    kv("sign_variant", sc.sign_variant.name().into());
    if sc.kind == ScenarioKind::Conformal {
        kv("energy_c", format!("{}", sc.energy_c));
        kv("mech_v0", fmt3(sc.mech_v0));
        kv("mech_interval", fmt2(sc.mech_interval));
        kv("mech_conjugate_window", fmt2(sc.mech_conjugate_window));
        if let Some(r) = sc.rescaled_v0 {
            kv("rescaled_v0", fmt3(r));
        }
        kv("printed_flip", format!("{}", sc.printed_flip));
    }
    if !sc.branch_rays.is_empty() {
        kv(
            "branch_rays",
            sc.branch_rays
                .iter()
                .map(|r| format!("{} {}", r[0], r[1]))
                .collect::<Vec<_>>()
                .join("; "),
        );
        kv(
            "branch_alphas",
            sc.branch_alphas
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(", "),
        );
        kv("branch_window", fmt2(sc.branch_window));
    }
    kv("scan_window", fmt2(sc.scan.window));
    kv("scan_lambda_samples", sc.scan.lambda_samples.to_string());
    kv("scan_radius", sc.scan.radius.to_string());
    kv("scan_grid", sc.scan.grid_n.to_string());
    kv("scan_seeds", sc.scan.newton_seeds.to_string());
    kv("scan_seed_radius", sc.scan.seed_radius.to_string());
    kv("scan_shoot_tol", sc.scan.shoot_tol.to_string());
    kv("scan_max_iter", sc.scan.max_iter.to_string());
    kv("scan_miss_floor", sc.scan.miss_floor.to_string());
    kv(
        "scan_nontrivial_threshold",
        sc.scan.nontrivial_threshold.to_string(),
    );
    kv(
        "certificate_variant",
        match sc.certificate_variant {
            CertificateVariant::Mpp => "mpp".into(),
            CertificateVariant::New => "new".into(),
        },
    );
    kv("certificate_weight", sc.certificate_weight_text.clone());
    kv("rtol", sc.tol.rtol.to_string());
    kv("atol", sc.tol.atol.to_string());
    for n in &sc.notes {
        kv("note", n.clone());
    }
    out
}

/// Everything a run produces: the report plus raw scan rows per variant.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: Report,
    pub scans: Vec<(SignVariant, Vec<ScanRow>)>,
}

fn variant_potential(
    metric: &ConformalMetric,
    c: f64,
    variant: SignVariant,
    flip: bool,
) -> MechanicalSystem {
    let sign = if variant == SignVariant::Printed && flip {
        -1.0
    } else {
        1.0
    };
    let potential = ScalarField::sum(vec![
        ScalarField::constant(c),
        ScalarField::scale(-sign, metric.weight_field()),
    ]);
    MechanicalSystem::new(metric.signature, potential)
}

fn equations_of(sys: &MechanicalSystem, variant: SignVariant) -> EquationSet {
    let ode = crate::geometry::MechanicalOde::new(sys);
    let names = ["x", "y", "z"];
    let mut comps = Vec::new();
    for i in 0..3 {
        let g = &ode.gradient_fields()[i];
        if g.is_zero() {
            comps.push(format!("{}'' = 0", names[i]));
        } else {
            comps.push(format!("{}'' + {} = 0", names[i], g.render()));
        }
    }
    EquationSet {
        sign_variant: variant,
        x: comps[0].clone(),
        y: comps[1].clone(),
        z: comps[2].clone(),
    }
}

fn classify(
    cert_variant: CertificateVariant,
    identity: Option<f64>,
    evidence: &ScanEvidence,
    support: usize,
) -> (Classification, Option<String>, Vec<String>) {
    let mut notes = Vec::new();
    let nontrivial_found = !evidence.nontrivial_solutions.is_empty();
    if nontrivial_found && support >= 4 {
        notes.push(format!(
            "{} nontrivial solutions found; branch evidence with {} points near the conjugate \
             parameter",
            evidence.nontrivial_solutions.len(),
            support
        ));
        return (Classification::Bifurcating, None, notes);
    }
    if nontrivial_found {
        notes.push("nontrivial solutions found but without sufficient branch evidence".into());
        return (Classification::Undecided, None, notes);
    }
    match cert_variant {
        CertificateVariant::New
            if evidence.floor_met && evidence.newton_all_trivial && identity.is_some() =>
        {
            let positivity = "certificate integrand x^4 + y^4 + 6 x^2 y^2 (weighted by a \
                              positive factor) is pointwise nonnegative and vanishes only at \
                              x = y = 0; any pinned solution is therefore trivial"
                .to_string();
            notes.push(format!(
                "scan floor met: min outer-ring miss {} >= {}",
                evidence.min_miss_outer_ring, evidence.miss_floor
            ));
            notes.push(format!(
                "cross-Wronskian identity holds with constant {}",
                identity.unwrap()
            ));
            (
                Classification::CertifiedNonBifurcating,
                Some(positivity),
                notes,
            )
        }
        CertificateVariant::New if identity.is_none() => {
            notes.push(
                "no branch found (numerical); the cross-Wronskian identity does not hold for \
                 this system, so the certificate carries no exclusion force"
                    .into(),
            );
            (Classification::Undecided, None, notes)
        }
        CertificateVariant::New => {
            notes.push("no branch found (numerical), but scan evidence is incomplete".into());
            (Classification::Undecided, None, notes)
        }
        CertificateVariant::Mpp => {
            notes.push(
                "no branch found (numerical); the certificate integrand vanishes on the \
                 coordinate planes, so it carries no exclusion force"
                    .into(),
            );
            (Classification::Undecided, None, notes)
        }
    }
}

fn branch_label(ray: [f64; 2]) -> String {
    if ray[1] == 0.0 {
        "x".into()
    } else if ray[0] == 0.0 {
        "y".into()
    } else {
        let deg = ray[1].atan2(ray[0]).to_degrees().rem_euclid(360.0);
        format!("deg{:03}", deg.round() as i64)
    }
}

fn certificate_over_solution(
    variant: CertificateVariant,
    weight: &ScalarField,
    sol: &crate::integrate::OdeSolution<6>,
    lambda: f64,
) -> Certificate {
    let density = |t: f64| {
        let y = sol.sample(t);
        weight.eval([y[0], y[1], y[2]]) * variant.density(y[0], y[1])
    };
    let n = 2048usize;
    let mut integrand_min = f64::INFINITY;
    for k in 0..=n {
        let t = lambda * k as f64 / n as f64;
        integrand_min = integrand_min.min(density(t));
    }
    Certificate {
        variant,
        lambda,
        value: dynamics::simpson(density, 0.0, lambda, 256),
        integrand_min,
        weight: weight.render(),
    }
}

/// Runs the full pipeline for a scenario.
pub fn run_scenario(sc: &Scenario) -> Result<RunArtifacts> {
    let signature = Signature::parse(&sc.signature_text)?;
    let field = parse(&sc.field_text)?;
    let weight = parse(&sc.certificate_weight_text)?;

    let mut energies: Vec<EnergyRecord> = Vec::new();
    let mut equations: Vec<EquationSet> = Vec::new();
    let mut branches: Vec<BranchRecord> = Vec::new();
    let mut certificates: Vec<CertificateRecord> = Vec::new();
    let mut verdicts: Vec<Verdict> = Vec::new();
    let mut scans: Vec<(SignVariant, Vec<ScanRow>)> = Vec::new();
    let mut notes = sc.notes.clone();
    let mut correspondence: Option<CorrespondenceSummary> = None;
    let mut mechanical_conjugates: Vec<ConjugatePoint> = Vec::new();
    let mut cross_check_gap: Option<f64> = None;

    let conjugates: Vec<ConjugatePoint>;

    match sc.kind {
        ScenarioKind::Mechanical => {
            let sys = MechanicalSystem::new(signature, field);
            equations.push(equations_of(&sys, SignVariant::Derived));

            let base = integrate_pgeodesic(&sys, sc.q0, sc.v0, sc.interval, sc.tol)?;
            energies.push(EnergyRecord {
                label: "mechanical energy of base trajectory".into(),
                value: mechanical_energy(&sys, &base, sc.interval.0),
            });

            conjugates = conjugate_points(
                &System::Mechanical(sys.clone()),
                sc.q0,
                sc.v0,
                sc.conjugate_window,
                sc.tol,
            )?;

            let mut traced: Vec<Branch> = Vec::new();
            for ray in &sc.branch_rays {
                let branch = bifurcation::trace_branch(
                    &sys,
                    sc.q0,
                    sc.v0[2],
                    *ray,
                    &sc.branch_alphas,
                    sc.branch_window,
                    sc.tol,
                )?;
                branches.push(BranchRecord {
                    label: branch_label(branch.ray),
                    ray: branch.ray,
                    points: branch.points.clone(),
                });
                traced.push(branch);
            }

            for probe in &sc.certificate_probes {
                let sol = bifurcation::Shooter::new(&sys, sc.q0, sc.v0[2], sc.tol)
                    .integrate(probe.w, probe.lambda)?;
                let cert =
                    certificate_over_solution(sc.certificate_variant, &weight, &sol, probe.lambda);
                certificates.push(CertificateRecord {
                    label: probe.label.clone(),
                    certificate: cert,
                });
            }

            let result = bifurcation::nonbifurcation_scan(
                &sys,
                sc.q0,
                sc.v0[2],
                &sc.scan,
                sc.certificate_variant,
                &weight,
                sc.tol,
            )?;
            let evidence = result.evidence.clone();
            scans.push((SignVariant::Derived, result.rows));

            let identity = bifurcation::certificate_identity_constant(
                &sys,
                sc.q0,
                sc.v0[2],
                sc.certificate_variant,
                &weight,
                sc.scan.window.1,
                sc.tol,
            )?;

            let mut items = Vec::new();
            for cp in &conjugates {
                let support = traced
                    .iter()
                    .map(|b| bifurcation::branch_support(cp.t_star, b))
                    .max()
                    .unwrap_or(0);
                let (classification, positivity, cnotes) =
                    classify(sc.certificate_variant, identity, &evidence, support);
                items.push(ConjugateVerdict {
                    t_star: cp.t_star,
                    multiplicity: cp.multiplicity,
                    position: cp.position,
                    classification,
                    branch_support: support,
                    scan: Some(evidence.clone()),
                    certificate_positivity: positivity,
                    certificate_identity_constant: identity,
                    notes: cnotes,
                });
            }
            verdicts.push(Verdict {
                sign_variant: SignVariant::Derived,
                items,
            });
            notes.push("mechanical scenario: printed and derived equations coincide".into());
        }
        ScenarioKind::Conformal => {
            let metric = ConformalMetric::new(signature, field)?;

            let base = integrate_geodesic(&metric, sc.q0, sc.v0, sc.interval, sc.tol)?;
            energies.push(EnergyRecord {
                label: "conformal energy of base geodesic".into(),
                value: conformal_energy(&metric, &base),
            });
            if let Some(rv) = sc.rescaled_v0 {
                let rescaled = integrate_geodesic(&metric, sc.q0, rv, sc.interval, sc.tol)?;
                energies.push(EnergyRecord {
                    label: "conformal energy of rescaled base geodesic".into(),
                    value: conformal_energy(&metric, &rescaled),
                });
            }

            conjugates = conjugate_points(
                &System::Conformal(metric.clone()),
                sc.q0,
                sc.v0,
                sc.conjugate_window,
                sc.tol,
            )?;

            let derived_sys =
                variant_potential(&metric, sc.energy_c, SignVariant::Derived, sc.printed_flip);
            let mech_base =
                integrate_pgeodesic(&derived_sys, sc.q0, sc.mech_v0, sc.mech_interval, sc.tol)?;
            energies.push(EnergyRecord {
                label: "mechanical energy of axis trajectory".into(),
                value: mechanical_energy(&derived_sys, &mech_base, sc.mech_interval.0),
            });
            let corr = dynamics::verify_correspondence(&metric, sc.energy_c, &mech_base, 1e-8)?;
            correspondence = Some(CorrespondenceSummary {
                energy: corr.energy,
                max_residual: corr.max_residual,
                time_map_spot: corr.time_map[corr.time_map.len() / 2],
            });

            mechanical_conjugates = conjugate_points(
                &System::Mechanical(derived_sys.clone()),
                sc.q0,
                sc.mech_v0,
                sc.mech_conjugate_window,
                sc.tol,
            )?;

            if let (Some(g), Some(m)) = (conjugates.first(), mechanical_conjugates.first()) {
                let gap = (0..3)
                    .map(|i| (g.position[i] - m.position[i]).abs())
                    .fold(0.0f64, f64::max);
                cross_check_gap = Some(gap);
            }

            let mut traced: Vec<Branch> = Vec::new();
            for ray in &sc.branch_rays {
                let branch = bifurcation::trace_branch(
                    &derived_sys,
                    sc.q0,
                    sc.mech_v0[2],
                    *ray,
                    &sc.branch_alphas,
                    sc.branch_window,
                    sc.tol,
                )?;
                branches.push(BranchRecord {
                    label: branch_label(branch.ray),
                    ray: branch.ray,
                    points: branch.points.clone(),
                });
                traced.push(branch);
            }

            for probe in &sc.certificate_probes {
                let sol = bifurcation::Shooter::new(&derived_sys, sc.q0, sc.mech_v0[2], sc.tol)
                    .integrate(probe.w, probe.lambda)?;
                let cert =
                    certificate_over_solution(sc.certificate_variant, &weight, &sol, probe.lambda);
                certificates.push(CertificateRecord {
                    label: probe.label.clone(),
                    certificate: cert,
                });
            }

            // per-variant scan and verdict, anchored on the derived-picture
            // conjugate points; the primary variant comes first
            let variants: Vec<SignVariant> = match sc.sign_variant {
                SignVariant::Derived => vec![SignVariant::Derived, SignVariant::Printed],
                SignVariant::Printed => vec![SignVariant::Printed, SignVariant::Derived],
            };
            for &variant in &variants {
                let sys = variant_potential(&metric, sc.energy_c, variant, sc.printed_flip);
                equations.push(equations_of(&sys, variant));
                let result = bifurcation::nonbifurcation_scan(
                    &sys,
                    sc.q0,
                    sc.mech_v0[2],
                    &sc.scan,
                    sc.certificate_variant,
                    &weight,
                    sc.tol,
                )?;
                let evidence = result.evidence.clone();
                scans.push((variant, result.rows));

                let identity = bifurcation::certificate_identity_constant(
                    &sys,
                    sc.q0,
                    sc.mech_v0[2],
                    sc.certificate_variant,
                    &weight,
                    sc.scan.window.1,
                    sc.tol,
                )?;

                let mut items = Vec::new();
                for cp in &mechanical_conjugates {
                    let support = traced
                        .iter()
                        .map(|b| bifurcation::branch_support(cp.t_star, b))
                        .max()
                        .unwrap_or(0);
                    let (classification, positivity, mut cnotes) =
                        classify(sc.certificate_variant, identity, &evidence, support);
                    if variant == SignVariant::Printed && sc.printed_flip {
                        cnotes.push(
                            "printed-sign system differs from the derived one; its linearized \
                             flow has no conjugate parameter in the window, while the \
                             certificate is sign-independent"
                                .into(),
                        );
                    }
                    items.push(ConjugateVerdict {
                        t_star: cp.t_star,
                        multiplicity: cp.multiplicity,
                        position: cp.position,
                        classification,
                        branch_support: support,
                        scan: Some(evidence.clone()),
                        certificate_positivity: positivity,
                        certificate_identity_constant: identity,
                        notes: cnotes,
                    });
                }
                verdicts.push(Verdict {
                    sign_variant: variant,
                    items,
                });
            }
        }
    }

    let report = Report {
        schema_version: 1,
        tool_version: crate::VERSION.into(),
        scenario: sc.id.clone(),
        kind: sc.kind.name().into(),
        signature: sc.signature_text.clone(),
        sign_variant: sc.sign_variant,
        field_text: parse(&sc.field_text)?.render(),
        tolerances: ToleranceInfo {
            rtol: sc.tol.rtol,
            atol: sc.tol.atol,
            shoot_tol: sc.scan.shoot_tol,
            bisection_tol: 1e-10,
            rank_rtol: crate::variational::RANK_RTOL,
            quadrature_panels_per_two_pi: 2048,
        },
        equations,
        energies,
        conjugate_points: conjugates,
        mechanical_conjugates,
        position_cross_check_gap: cross_check_gap,
        correspondence,
        branches,
        certificates,
        verdicts,
        notes,
    };

    Ok(RunArtifacts { report, scans })
}
