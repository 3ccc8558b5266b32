//! Run configuration in a line-oriented `section.key = value` format.
//!
//! `#` starts a comment, blank lines are ignored, list values are
//! comma-separated. `grid.nx`, `grid.ny` and `grid.nz` are required; every
//! other key has a default. Unknown and repeated keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::background::{build_background_with, calibrate, default_mu, BackgroundProfile};
use crate::barrier::BarrierParams;
use crate::blasius::{solve_blasius, BlasiusProfile, DEFAULT_STEP, DEFAULT_TOL, DEFAULT_ZETA_MAX};
use crate::boundary::{EnvelopeParams, PerturbationFamily, PerturbationSpec};
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::ledger::LedgerParams;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub zmax: f64,
    pub stretch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsConfig {
    /// `None` selects the rescaling default for the configured Y and x₀.
    pub mu: Option<f64>,
    pub x0: f64,
    pub eps: f64,
    pub eps0_schedule: Vec<f64>,
    pub transpiration: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    /// `zero` or `bump`.
    pub family: String,
    pub a_u: f64,
    pub a_v: f64,
    /// Bump width and centre as fractions of Y.
    pub width: f64,
    pub y_center: f64,
    pub ell: f64,
    pub i_max: usize,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierConfig {
    pub a: f64,
    pub delta: f64,
    pub n: f64,
    pub alpha: f64,
    /// Barrier decay rate; the envelope uses the physics μ.
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverBlock {
    pub picard_tol: f64,
    pub picard_max: usize,
    pub inner_tol: f64,
    pub inner_max: usize,
    pub upwind_order: usize,
    pub u_floor: f64,
    pub z_probe: f64,
    /// 0 defers to `PRANDTL3D_THREADS` or the rayon default.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerConfig {
    pub d0: f64,
    /// `None` calibrates c₀ from the background.
    pub c0: Option<f64>,
    pub c2: f64,
    pub c_dzk: f64,
    /// `background` or `discrete`.
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoConfig {
    pub out_dir: PathBuf,
    /// Write a snapshot every this many Picard iterations; 0 writes only the final state.
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub perturbation: PerturbationConfig,
    pub barrier: BarrierConfig,
    pub solver: SolverBlock,
    pub ledger: LedgerConfig,
    pub io: IoConfig,
}

const REQUIRED: [&str; 3] = ["grid.nx", "grid.ny", "grid.nz"];

/// Every accepted key, in canonical order.
pub const KNOWN_KEYS: [&str; 40] = [
    "grid.nx",
    "grid.ny",
    "grid.nz",
    "grid.X",
    "grid.Y",
    "grid.Zmax",
    "grid.stretch",
    "physics.mu",
    "physics.x0",
    "physics.eps",
    "physics.eps0_schedule",
    "physics.transpiration",
    "perturbation.family",
    "perturbation.a_u",
    "perturbation.a_v",
    "perturbation.width",
    "perturbation.y_center",
    "perturbation.ell",
    "perturbation.i_max",
    "perturbation.strict",
    "barrier.A",
    "barrier.delta",
    "barrier.N",
    "barrier.alpha",
    "barrier.mu",
    "solver.picard_tol",
    "solver.picard_max",
    "solver.inner_tol",
    "solver.inner_max",
    "solver.upwind_order",
    "solver.u_floor",
    "solver.z_probe",
    "solver.threads",
    "ledger.d0",
    "ledger.c0",
    "ledger.c2",
    "ledger.c_dzk",
    "ledger.reference",
    "io.out_dir",
    "io.snapshot_every",
];

struct Raw {
    values: BTreeMap<String, (usize, String)>,
}

impl Raw {
    fn take<T>(&self, key: &str, default: T, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some((line, v)) => parse(v).ok_or_else(|| Error::Parse {
                line: *line,
                msg: format!("invalid value `{v}` for `{key}`"),
            }),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        self.take(key, default, |v| v.parse().ok())
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        self.take(key, default, |v| v.parse().ok())
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        self.take(key, default, |v| match v {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.take(key, None, |v| {
            if v == "auto" {
                Some(None)
            } else {
                v.parse().ok().map(Some)
            }
        })
    }

    fn string(&self, key: &str, default: &str) -> Result<String> {
        self.take(key, default.to_string(), |v| Some(v.to_string()))
    }

    fn list(&self, key: &str, default: Vec<f64>) -> Result<Vec<f64>> {
        self.take(key, default, |v| {
            v.split(',')
                .map(|s| s.trim().parse().ok())
                .collect::<Option<Vec<f64>>>()
        })
    }

    fn line_of(&self, key: &str) -> usize {
        self.values.get(key).map_or(0, |v| v.0)
    }
}

fn parse_raw(text: &str) -> Result<Raw> {
    let mut values = BTreeMap::new();
    for (n, raw_line) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw_line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `section.key = value`, got `{body}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Parse {
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(Error::Parse {
                line,
                msg: format!("empty value for `{key}`"),
            });
        }
        if let Some((first, _)) = values.insert(key.to_string(), (line, value.to_string())) {
            return Err(Error::Parse {
                line,
                msg: format!("`{key}` repeats line {first}"),
            });
        }
    }
    Ok(Raw { values })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let r = parse_raw(text)?;
        for key in REQUIRED {
            if !r.values.contains_key(key) {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("missing required key `{key}`"),
                });
            }
        }
        let cfg = RunConfig {
            grid: GridConfig {
                nx: r.usize("grid.nx", 0)?,
                ny: r.usize("grid.ny", 0)?,
                nz: r.usize("grid.nz", 0)?,
                lx: r.f64("grid.X", 0.1)?,
                ly: r.f64("grid.Y", 1.0)?,
                zmax: r.f64("grid.Zmax", 12.0)?,
                stretch: r.f64("grid.stretch", 2.0)?,
            },
            physics: PhysicsConfig {
                mu: r.opt_f64("physics.mu")?,
                x0: r.f64("physics.x0", 1.0)?,
                eps: r.f64("physics.eps", 1e-3)?,
                eps0_schedule: r.list("physics.eps0_schedule", vec![0.05])?,
                transpiration: r.bool("physics.transpiration", true)?,
            },
            perturbation: PerturbationConfig {
                family: r.string("perturbation.family", "bump")?,
                a_u: r.f64("perturbation.a_u", 1e-4)?,
                a_v: r.f64("perturbation.a_v", -1e-4)?,
                width: r.f64("perturbation.width", 0.5)?,
                y_center: r.f64("perturbation.y_center", 0.5)?,
                ell: r.f64("perturbation.ell", 1.5)?,
                i_max: r.usize("perturbation.i_max", 2)?,
                strict: r.bool("perturbation.strict", false)?,
            },
            barrier: BarrierConfig {
                a: r.f64("barrier.A", 10.0)?,
                delta: r.f64("barrier.delta", 0.25)?,
                n: r.f64("barrier.N", 6.0)?,
                alpha: r.f64("barrier.alpha", 0.1)?,
                mu: r.f64("barrier.mu", 0.1)?,
            },
            solver: SolverBlock {
                picard_tol: r.f64("solver.picard_tol", 1e-10)?,
                picard_max: r.usize("solver.picard_max", 30)?,
                inner_tol: r.f64("solver.inner_tol", 1e-13)?,
                inner_max: r.usize("solver.inner_max", 50)?,
                upwind_order: r.usize("solver.upwind_order", 1)?,
                u_floor: r.f64("solver.u_floor", 1e-3)?,
                z_probe: r.f64("solver.z_probe", 0.2)?,
                threads: r.usize("solver.threads", 0)?,
            },
            ledger: LedgerConfig {
                d0: r.f64("ledger.d0", 0.1)?,
                c0: r.opt_f64("ledger.c0")?,
                c2: r.f64("ledger.c2", 1.0)?,
                c_dzk: r.f64("ledger.c_dzk", 1.0)?,
                reference: r.string("ledger.reference", "discrete")?,
            },
            io: IoConfig {
                out_dir: PathBuf::from(r.string("io.out_dir", "out")?),
                snapshot_every: r.usize("io.snapshot_every", 0)?,
            },
        };
        cfg.validate_with(&r)?;
        Ok(cfg)
    }

    fn validate_with(&self, r: &Raw) -> Result<()> {
        let bad = |key: &str, msg: String| {
            Err(Error::Parse {
                line: r.line_of(key),
                msg,
            })
        };
        let g = &self.grid;
        if g.nx < 8 || g.ny < 8 || g.nz < 8 {
            return bad(
                "grid.nx",
                format!("grid {}x{}x{} is too small", g.nx, g.ny, g.nz),
            );
        }
        if !(g.lx > 0.0 && g.lx < 0.2) {
            return bad("grid.X", format!("X = {} must lie in (0, 1/5)", g.lx));
        }
        if !(g.ly > 0.0 && g.zmax > 0.0 && g.stretch >= 0.0) {
            return bad(
                "grid.Y",
                "Y, Zmax must be positive and stretch non-negative".into(),
            );
        }
        if !matches!(self.perturbation.family.as_str(), "zero" | "bump") {
            return bad(
                "perturbation.family",
                format!("unknown family `{}`", self.perturbation.family),
            );
        }
        if !matches!(self.ledger.reference.as_str(), "background" | "discrete") {
            return bad(
                "ledger.reference",
                format!("unknown reference `{}`", self.ledger.reference),
            );
        }
        if self.physics.eps0_schedule.is_empty() {
            return bad("physics.eps0_schedule", "empty schedule".into());
        }
        if let Err(e) = self.solver_config().validate() {
            return bad("solver.picard_tol", e.to_string());
        }
        if let Err(e) = self.perturbation_spec().validate() {
            return bad("perturbation.i_max", e.to_string());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text: every key in [`KNOWN_KEYS`] order with its effective value.
    pub fn to_text(&self) -> String {
        let (g, p, b, s, l) = (
            &self.grid,
            &self.physics,
            &self.barrier,
            &self.solver,
            &self.ledger,
        );
        let t = &self.perturbation;
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |x| format!("{x:?}"));
        let sched: Vec<String> = p.eps0_schedule.iter().map(|v| format!("{v:?}")).collect();
        let values = [
            g.nx.to_string(),
            g.ny.to_string(),
            g.nz.to_string(),
            format!("{:?}", g.lx),
            format!("{:?}", g.ly),
            format!("{:?}", g.zmax),
            format!("{:?}", g.stretch),
            opt(p.mu),
            format!("{:?}", p.x0),
            format!("{:?}", p.eps),
            sched.join(", "),
            p.transpiration.to_string(),
            t.family.clone(),
            format!("{:?}", t.a_u),
            format!("{:?}", t.a_v),
            format!("{:?}", t.width),
            format!("{:?}", t.y_center),
            format!("{:?}", t.ell),
            t.i_max.to_string(),
            t.strict.to_string(),
            format!("{:?}", b.a),
            format!("{:?}", b.delta),
            format!("{:?}", b.n),
            format!("{:?}", b.alpha),
            format!("{:?}", b.mu),
            format!("{:?}", s.picard_tol),
            s.picard_max.to_string(),
            format!("{:?}", s.inner_tol),
            s.inner_max.to_string(),
            s.upwind_order.to_string(),
            format!("{:?}", s.u_floor),
            format!("{:?}", s.z_probe),
            s.threads.to_string(),
            format!("{:?}", l.d0),
            opt(l.c0),
            format!("{:?}", l.c2),
            format!("{:?}", l.c_dzk),
            l.reference.clone(),
            self.io.out_dir.display().to_string(),
            self.io.snapshot_every.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in KNOWN_KEYS.iter().zip(values) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded. Comments, blank lines
    /// and key order in the source file do not change it.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_grid(&self) -> Result<Grid3> {
        let g = &self.grid;
        Grid3::stretched(g.nx, g.ny, g.nz, g.lx, g.ly, g.zmax, g.stretch)
    }

    pub fn blasius(&self) -> Result<BlasiusProfile> {
        Ok(solve_blasius(DEFAULT_ZETA_MAX, DEFAULT_STEP, DEFAULT_TOL)?.with_x0(self.physics.x0))
    }

    pub fn mu(&self) -> f64 {
        self.physics
            .mu
            .unwrap_or_else(|| default_mu(self.grid.ly, self.physics.x0))
    }

    /// Background at `eps0` with calibrated assumption constants.
    pub fn background(
        &self,
        b: &BlasiusProfile,
        g: &Grid3,
        eps0: f64,
    ) -> Result<BackgroundProfile> {
        let mut p = build_background_with(b, g, eps0, self.mu())?;
        p.constants = calibrate(&p);
        Ok(p)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            eps0_schedule: self.physics.eps0_schedule.clone(),
            picard_tol: s.picard_tol,
            picard_max: s.picard_max,
            inner_tol: s.inner_tol,
            inner_max: s.inner_max,
            upwind_order: s.upwind_order,
            u_floor_factor: s.u_floor,
            transpiration: self.physics.transpiration,
            z_probe: s.z_probe,
        }
    }

    pub fn perturbation_spec(&self) -> PerturbationSpec {
        let t = &self.perturbation;
        let y = self.grid.ly;
        let family = match t.family.as_str() {
            "zero" => PerturbationFamily::Zero,
            _ => PerturbationFamily::SeparableBump {
                a_u: t.a_u,
                a_v: t.a_v,
                width: t.width * y,
                y_center: t.y_center * y,
                ell: t.ell,
            },
        };
        PerturbationSpec {
            eps: self.physics.eps,
            envelope: EnvelopeParams {
                a: self.barrier.a,
                delta: self.barrier.delta,
                n: self.barrier.n,
                mu: self.mu(),
            },
            family,
            i_max: t.i_max,
            strict: t.strict,
        }
    }

    pub fn barrier_params(&self, eps0: f64) -> BarrierParams {
        let b = &self.barrier;
        BarrierParams {
            a: b.a,
            delta: b.delta,
            n: b.n,
            mu: b.mu,
            alpha: b.alpha,
            eps0,
        }
    }

    pub fn ledger_params(&self, bg: &BackgroundProfile) -> LedgerParams {
        let l = &self.ledger;
        let mut p = LedgerParams::calibrated(bg, self.physics.eps, self.barrier_params(bg.eps0));
        p.d0 = l.d0;
        p.c2 = l.c2;
        p.c_dzk = l.c_dzk;
        if let Some(c0) = l.c0 {
            p.c0 = c0;
        }
        p.u_floor = self.solver_config().u_floor(bg.eps0);
        p
    }
}
