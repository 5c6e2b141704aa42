//! Synthetic flyby scenarios and the navigation-error model.
//!
//! Each scenario pairs a hyperbolic target with a spacecraft that reaches
//! the target ballistically at `t_f`. The catalog is generated from a seed
//! and serializes to a versioned text file.

mod uncertainty;

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

pub use uncertainty::{estimate, varsigma, Envelope, UncertaintyProfile};

use crate::dynamics::{iso_flow, IsoElements, LvlhFrame, SpacecraftState, Vec3, AU_KM, MU_SUN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: usize,
    /// Target elements at `t = 0` (epoch 0).
    pub iso: IsoElements,
    /// Relative state at `t = 0`.
    pub x0: SpacecraftState,
    pub t_f: f64,
    /// Desired terminal relative position (km).
    pub rho: Vec3,
    pub seed: u64,
}

impl Scenario {
    /// Uncontrolled (ballistic) relative state and target elements at `t`,
    /// both from the exact two-body flow of the states at `t = 0`.
    pub fn ideal_state(&self, t: f64) -> Result<(SpacecraftState, IsoElements)> {
        let frame0 = LvlhFrame::from_elements(&self.iso)?;
        let (r0, v0) = frame0.heliocentric_state(&self.x0);
        let (r, v) = flow_state(&r0, &v0, t)?;
        let iso = iso_flow(&self.iso, t)?;
        let frame = LvlhFrame::from_elements(&iso)?;
        Ok((frame.relative_state(&r, &v), iso))
    }
}

/// Sampling ranges for synthetic catalogs. Each pair is `(min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogRanges {
    pub eccentricity: (f64, f64),
    pub perihelion_au: (f64, f64),
    pub inclination: (f64, f64),
    /// Encounter relative speed (km/s).
    pub rel_speed: (f64, f64),
    /// Encounter true anomaly as a fraction of the asymptote angle.
    pub encounter_anomaly_frac: (f64, f64),
    pub rho_radius: f64,
    pub t_f: f64,
    pub train_fraction: f64,
}

impl Default for CatalogRanges {
    fn default() -> Self {
        Self {
            eccentricity: (1.1, 4.0),
            perihelion_au: (0.5, 3.0),
            inclination: (0.0, PI),
            rel_speed: (10.0, 30.0),
            encounter_anomaly_frac: (-0.6, 0.6),
            rho_radius: 100.0,
            t_f: 86400.0,
            train_fraction: 0.8,
        }
    }
}

impl CatalogRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("eccentricity", self.eccentricity),
            ("perihelion_au", self.perihelion_au),
            ("inclination", self.inclination),
            ("rel_speed", self.rel_speed),
            ("encounter_anomaly_frac", self.encounter_anomaly_frac),
        ] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!("range {name}: min {lo} > max {hi}")));
            }
        }
        if self.eccentricity.0 <= 1.0 {
            return Err(Error::invalid("targets must be hyperbolic (eccentricity > 1)"));
        }
        if self.perihelion_au.0 <= 0.0 || self.rel_speed.0 < 0.0 {
            return Err(Error::invalid("perihelion and relative speed must be positive"));
        }
        if self.encounter_anomaly_frac.0 <= -1.0 || self.encounter_anomaly_frac.1 >= 1.0 {
            return Err(Error::invalid("encounter anomaly must stay inside the asymptotes"));
        }
        if !(self.rho_radius >= 0.0) || !(self.t_f > 0.0) || !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::invalid("need rho_radius >= 0, t_f > 0, train_fraction in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub scenarios: Vec<Scenario>,
    /// The first `n_train` scenarios form the training split.
    pub n_train: usize,
    pub seed: u64,
}

impl Catalog {
    pub fn train(&self) -> &[Scenario] {
        &self.scenarios[..self.n_train]
    }

    pub fn test(&self) -> &[Scenario] {
        &self.scenarios[self.n_train..]
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    let d: [f64; 3] = UnitSphere.sample(rng);
    Vec3::new(d[0], d[1], d[2]).normalize()
}

/// Two-body flow of an arbitrary heliocentric state.
fn flow_state(r: &Vec3, v: &Vec3, dt: f64) -> Result<(Vec3, Vec3)> {
    let oe = IsoElements::from_state(r, v, 0.0, MU_SUN)?;
    Ok(iso_flow(&oe, dt)?.to_state())
}

/// Deterministic synthetic catalog of `n` hyperbolic flyby scenarios.
pub fn generate_catalog(n: usize, rng_seed: u64, ranges: &CatalogRanges) -> Result<Catalog> {
    if n == 0 {
        return Err(Error::invalid("catalog size must be at least 1"));
    }
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut scenarios = Vec::with_capacity(n);
    while scenarios.len() < n {
        let e = uniform(&mut rng, ranges.eccentricity);
        let q = uniform(&mut rng, ranges.perihelion_au) * AU_KM;
        let nu_inf = (-1.0 / e).acos();
        let encounter = IsoElements {
            semi_major_axis: q / (1.0 - e),
            eccentricity: e,
            inclination: uniform(&mut rng, ranges.inclination),
            raan: uniform(&mut rng, (0.0, 2.0 * PI)),
            arg_periapsis: uniform(&mut rng, (0.0, 2.0 * PI)),
            anomaly_at_epoch: uniform(&mut rng, ranges.encounter_anomaly_frac) * nu_inf,
            epoch: ranges.t_f,
            mu_sun: MU_SUN,
        };
        let speed = uniform(&mut rng, ranges.rel_speed);
        let dir = unit_vector(&mut rng);
        let rho = unit_vector(&mut rng) * ranges.rho_radius;
        let seed: u64 = rng.random();
        // Draws above are consumed even when the geometry is rejected, so the
        // stream stays reproducible.
        let Ok(scenario) = (|| -> Result<Scenario> {
            let (r_enc, v_enc) = encounter.to_state();
            let (r_sc, v_sc) = flow_state(&r_enc, &(v_enc + dir * speed), -ranges.t_f)?;
            let iso = IsoElements {
                epoch: 0.0,
                ..iso_flow(&encounter, -ranges.t_f)?
            };
            let frame = LvlhFrame::from_elements(&iso)?;
            Ok(Scenario {
                id: scenarios.len(),
                iso,
                x0: frame.relative_state(&r_sc, &v_sc),
                t_f: ranges.t_f,
                rho,
                seed,
            })
        })() else {
            continue;
        };
        scenarios.push(scenario);
    }
    let n_train = ((n as f64) * ranges.train_fraction).round() as usize;
    Ok(Catalog {
        scenarios,
        n_train: n_train.min(n),
        seed: rng_seed,
    })
}

const CATALOG_HEADER: &str = "# rendezvous-catalog v1";
const CATALOG_COLUMNS: &str = "id,a_km,e,inc_rad,raan_rad,argp_rad,nu_rad,epoch_s,mu_km3s2,\
px_km,py_km,pz_km,vx_kms,vy_kms,vz_kms,rho_x_km,rho_y_km,rho_z_km,t_f_s,seed";

impl Catalog {
    /// Text form; `{}` on f64 prints the shortest round-trip representation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CATALOG_HEADER}").unwrap();
        writeln!(out, "# n={} n_train={} seed={}", self.scenarios.len(), self.n_train, self.seed).unwrap();
        writeln!(out, "{CATALOG_COLUMNS}").unwrap();
        for s in &self.scenarios {
            let o = &s.iso;
            let fields = [
                o.semi_major_axis,
                o.eccentricity,
                o.inclination,
                o.raan,
                o.arg_periapsis,
                o.anomaly_at_epoch,
                o.epoch,
                o.mu_sun,
                s.x0.p.x,
                s.x0.p.y,
                s.x0.p.z,
                s.x0.v.x,
                s.x0.v.y,
                s.x0.v.z,
                s.rho.x,
                s.rho.y,
                s.rho.z,
                s.t_f,
            ];
            write!(out, "{}", s.id).unwrap();
            for f in fields {
                write!(out, ",{f}").unwrap();
            }
            writeln!(out, ",{}", s.seed).unwrap();
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut lines = text.lines();
        if lines.next() != Some(CATALOG_HEADER) {
            return Err(bad("missing or unsupported catalog header".into()));
        }
        let meta = lines.next().ok_or_else(|| bad("missing metadata line".into()))?;
        let mut n_train = None;
        let mut seed = None;
        for kv in meta.trim_start_matches('#').split_whitespace() {
            match kv.split_once('=') {
                Some(("n_train", v)) => n_train = v.parse().ok(),
                Some(("seed", v)) => seed = v.parse().ok(),
                _ => {}
            }
        }
        if lines.next() != Some(CATALOG_COLUMNS) {
            return Err(bad("unexpected column header".into()));
        }
        let mut scenarios = Vec::new();
        for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 20 {
                return Err(bad(format!("row {k}: expected 20 columns, got {}", cols.len())));
            }
            let f = |i: usize| -> Result<f64> {
                cols[i].parse().map_err(|_| bad(format!("row {k}: bad number {:?}", cols[i])))
            };
            let iso = IsoElements {
                semi_major_axis: f(1)?,
                eccentricity: f(2)?,
                inclination: f(3)?,
                raan: f(4)?,
                arg_periapsis: f(5)?,
                anomaly_at_epoch: f(6)?,
                epoch: f(7)?,
                mu_sun: f(8)?,
            };
            iso.validate()?;
            scenarios.push(Scenario {
                id: cols[0].parse().map_err(|_| bad(format!("row {k}: bad id")))?,
                iso,
                x0: SpacecraftState::new(Vec3::new(f(9)?, f(10)?, f(11)?), Vec3::new(f(12)?, f(13)?, f(14)?)),
                rho: Vec3::new(f(15)?, f(16)?, f(17)?),
                t_f: f(18)?,
                seed: cols[19].parse().map_err(|_| bad(format!("row {k}: bad seed")))?,
            });
        }
        let n_train = n_train.ok_or_else(|| bad("metadata lacks n_train".into()))?;
        if n_train > scenarios.len() {
            return Err(bad("n_train exceeds catalog size".into()));
        }
        Ok(Catalog {
            scenarios,
            n_train,
            seed: seed.ok_or_else(|| bad("metadata lacks seed".into()))?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, DynamicsModel, DynamicsParams, MassModel};

    #[test]
    fn deterministic_and_split() {
        let r = CatalogRanges::default();
        let a = generate_catalog(12, 7, &r).unwrap();
        let b = generate_catalog(12, 7, &r).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.train().len() + a.test().len(), 12);
        let c = generate_catalog(499, 3, &r).unwrap();
        assert_eq!((c.train().len(), c.test().len()), (399, 100));
        for s in &c.scenarios {
            assert!((s.rho.norm() - 100.0).abs() < 1e-9);
            assert!(s.iso.is_hyperbolic());
        }
    }

    #[test]
    fn text_round_trip() {
        let a = generate_catalog(5, 11, &CatalogRanges::default()).unwrap();
        let b = Catalog::from_text(&a.to_text(), Path::new("mem")).unwrap();
        assert_eq!(a, b);
        assert!(Catalog::from_text("garbage", Path::new("mem")).is_err());
    }

    #[test]
    fn ballistic_arc_reaches_target() {
        let cat = generate_catalog(3, 5, &CatalogRanges::default()).unwrap();
        for s in &cat.scenarios {
            let params = DynamicsParams {
                iso: s.iso,
                mass: MassModel::default(),
                u_max: 3.0,
                model: DynamicsModel::TwoBodyLvlh,
            };
            let tr = integrate(&s.x0, &s.iso, 150.0, 0.0, s.t_f, |_| Ok(Vec3::zeros()), &params, 60.0)
                .unwrap();
            assert!(tr.last_state().p.norm() < 1e-3, "miss {}", tr.last_state().p.norm());
            let k = tr.t.len() / 2;
            let (x, oe) = s.ideal_state(tr.t[k]).unwrap();
            assert!((x.p - tr.x[k].p).norm() < 1e-3);
            assert!((x.v - tr.x[k].v).norm() < 1e-9);
            assert_eq!(oe, tr.oe[k]);
        }
    }

    #[test]
    fn invalid_ranges_rejected() {
        let r = CatalogRanges {
            perihelion_au: (3.0, 0.5),
            ..Default::default()
        };
        assert!(generate_catalog(3, 1, &r).is_err());
        assert!(generate_catalog(0, 1, &CatalogRanges::default()).is_err());
    }
}
