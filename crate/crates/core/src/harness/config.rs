//! Flat `key=value` experiment configuration. Units are carried by key
//! suffixes (`delta_hz`, `dt_us`, `gamma_phi_per_s`, ...); `#` starts a
//! comment. Every key is optional and defaults to the canonical symmetric
//! double well.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2, TAU};

use crate::compiler::HardwareProfile;
use crate::engine::NoiseModel;
use crate::error::{Error, Result};
use crate::potential::{FourierPotential, FourierTerm};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimator {
    Slope { shots: u32 },
    Pfd { h: f64, shots: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPlan {
    pub re_max: f64,
    pub n_re: usize,
    pub im_max: f64,
    pub n_im: usize,
    pub grid_shots: u32,
    pub line_v_max: f64,
    pub line_n: usize,
    pub line_shots: u32,
    pub pad_radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub potential: FourierPotential,
    pub dt: f64,
    pub steps: usize,
    pub x0: f64,
    /// Sideband and carrier π-pulse durations; they fix the hardware
    /// profile's Rabi rates.
    pub sideband_pi_time: f64,
    pub carrier_pi_time: f64,
    pub hardware: HardwareProfile,
    pub noise: NoiseModel,
    pub estimator: Estimator,
    /// Independent readout seeds averaged by the error budget.
    pub pfd_seeds: u32,
    pub scan: ScanPlan,
    pub seed: u64,
    pub cutoff: usize,
    /// Cutoff for program-mode density-matrix runs.
    pub lindblad_cutoff: usize,
    /// Output spacing in Trotter steps.
    pub sample_every: usize,
    /// Largest Strang substep in dephasing runs.
    pub max_substep: f64,
    pub thermal_nbar: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::parse("").expect("defaults are valid")
    }
}

/// Keys with the unit each carries.
const KEYS: &[&str] = &[
    "name",
    "delta_hz",
    "delta_rad_s",
    "lambda",
    "alpha0",
    "dt_us",
    "dt_s",
    "steps",
    "t_total_ms",
    "x0",
    "sideband_pi_time_us",
    "sideband_pi_time_s",
    "carrier_pi_time_us",
    "carrier_pi_time_s",
    "gamma_phi_per_s",
    "dephasing",
    "trotter",
    "detuned_sdd",
    "estimator",
    "pfd_h",
    "pfd_shots",
    "pfd_seeds",
    "scan_re_max",
    "scan_n_re",
    "scan_im_max",
    "scan_n_im",
    "scan_shots",
    "line_v_max",
    "line_n",
    "line_shots",
    "pad_radius",
    "seed",
    "cutoff",
    "lindblad_cutoff",
    "sample_every_ms",
    "sample_every_steps",
    "max_substep_us",
    "max_substep_s",
    "thermal_nbar",
];

/// Term keys: `term<n>_theta` | `term<n>_b_rad_s`, `term<n>_phi_rad`.
fn term_key(key: &str) -> Option<(u32, &str)> {
    let rest = key.strip_prefix("term")?;
    let split = rest.find('_')?;
    let n: u32 = rest[..split].parse().ok()?;
    let field = &rest[split + 1..];
    matches!(field, "theta" | "b_rad_s" | "phi_rad").then_some((n, field))
}

struct Raw {
    map: BTreeMap<String, (usize, String)>,
}

impl Raw {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn num(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| Error::Config(format!("line {line}: {key} expects a number, got '{v}'"))),
        }
    }

    fn num_or(&mut self, key: &str, default: f64) -> Result<f64> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    fn count_or(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("line {line}: {key} expects a nonnegative integer, got '{v}'"))),
        }
    }

    fn flag_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some((line, v)) => match v.as_str() {
                "true" | "on" | "1" => Ok(true),
                "false" | "off" | "0" => Ok(false),
                _ => Err(Error::Config(format!("line {line}: {key} expects true or false, got '{v}'"))),
            },
        }
    }

    /// At most one of two alternative keys.
    fn either(&mut self, a: &str, b: &str) -> Result<(Option<f64>, Option<f64>)> {
        let (x, y) = (self.num(a)?, self.num(b)?);
        if x.is_some() && y.is_some() {
            return Err(Error::Config(format!("give only one of {a} and {b}")));
        }
        Ok((x, y))
    }
}

/// Λ rounded to 12 significant digits, so that `alpha0 = π/6` and
/// `lambda = 3√2` produce bit-identical programs. (At 15 digits the two
/// land on opposite sides of a rounding boundary.) Rounding is idempotent,
/// so written configs re-parse to the same value.
fn canonical_lambda(lambda: f64) -> f64 {
    format!("{lambda:.11e}").parse().expect("formatted float parses")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !KEYS.contains(&k.as_str()) && term_key(&k).is_none() {
                return Err(Error::Config(format!("line {}: unknown key '{k}'", i + 1)));
            }
            if map.insert(k.clone(), (i + 1, v)).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", i + 1)));
            }
        }
        let term_keys: Vec<(u32, String, String)> = map
            .keys()
            .filter_map(|k| term_key(k).map(|(n, f)| (n, f.to_string(), k.clone())))
            .collect();
        let mut raw = Raw { map };

        let name = raw.take("name").map(|(_, v)| v).unwrap_or_else(|| "canonical".into());
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(Error::Config(format!("name '{name}' is not a plain directory name")));
        }
        let delta = match raw.either("delta_hz", "delta_rad_s")? {
            (Some(hz), _) => TAU * hz,
            (_, Some(w)) => w,
            _ => TAU * 500.0,
        };
        let lambda = match raw.either("lambda", "alpha0")? {
            (Some(l), _) => l,
            (_, Some(a)) if a > 0.0 => FourierPotential::lambda_from_alpha0(a),
            (_, Some(a)) => return Err(Error::Config(format!("alpha0 must be positive, got {a}"))),
            _ => 3.0 * SQRT_2,
        };
        let lambda = canonical_lambda(lambda);
        let dt = match raw.either("dt_us", "dt_s")? {
            (Some(us), _) => us * 1e-6,
            (_, Some(s)) => s,
            _ => 200e-6,
        };
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt} s")));
        }
        let steps = match (raw.take("steps"), raw.num("t_total_ms")?) {
            (Some(_), Some(_)) => return Err(Error::Config("give only one of steps and t_total_ms".into())),
            (Some((line, v)), None) => v
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("line {line}: steps expects a nonnegative integer, got '{v}'")))?,
            (None, Some(ms)) => {
                let k = ms * 1e-3 / dt;
                if !(k >= 0.0) || (k - k.round()).abs() > 1e-6 {
                    return Err(Error::Config(format!("t_total_ms={ms} is not a whole number of steps")));
                }
                k.round() as usize
            }
            (None, None) => 78,
        };

        let mut terms = std::collections::BTreeMap::<u32, (Option<f64>, Option<f64>, f64)>::new();
        for (n, field, key) in term_keys {
            let v = raw.num(&key)?.expect("key present");
            let e = terms.entry(n).or_insert((None, None, 0.0));
            match field.as_str() {
                "theta" => e.0 = Some(v),
                "b_rad_s" => e.1 = Some(v),
                _ => e.2 = v,
            }
        }
        // The canonical cos term when only its phase is given.
        if terms.is_empty() {
            terms.insert(1, (None, None, 0.0));
        }
        if let (1, Some(e)) = (terms.len(), terms.get_mut(&1)) {
            if e.0.is_none() && e.1.is_none() {
                e.0 = Some(0.8);
            }
        }
        let mut fourier = Vec::new();
        for (n, (theta, b, phi)) in terms {
            let b = match (theta, b) {
                (Some(_), Some(_)) => return Err(Error::Config(format!("give only one of term{n}_theta and term{n}_b_rad_s"))),
                (Some(t), None) => t / dt,
                (None, Some(b)) => b,
                (None, None) => return Err(Error::Config(format!("term{n} needs term{n}_theta or term{n}_b_rad_s"))),
            };
            fourier.push(FourierTerm { n, b, phi });
        }
        let potential = FourierPotential::new(delta, lambda, fourier).map_err(|e| Error::Config(e.to_string()))?;

        let x0 = raw.num_or("x0", -1.5)?;
        let micro = |pair: (Option<f64>, Option<f64>), default: f64| match pair {
            (Some(us), _) => us * 1e-6,
            (_, Some(s)) => s,
            _ => default,
        };
        let sideband = micro(raw.either("sideband_pi_time_us", "sideband_pi_time_s")?, 150e-6);
        let carrier = micro(raw.either("carrier_pi_time_us", "carrier_pi_time_s")?, 35e-6);
        let gamma_phi = raw.num_or("gamma_phi_per_s", 18.0)?;
        if !(sideband > 0.0 && carrier > 0.0 && gamma_phi >= 0.0) {
            return Err(Error::Config("pulse times must be positive and gamma_phi_per_s nonnegative".into()));
        }
        let hardware = HardwareProfile { omega: PI / sideband, omega0: PI / carrier, gamma_phi };
        let noise = NoiseModel {
            gamma_phi,
            dephasing: raw.flag_or("dephasing", true)?,
            trotter: raw.flag_or("trotter", true)?,
            detuned_sdd: raw.flag_or("detuned_sdd", true)?,
        };

        let h = raw.num_or("pfd_h", 0.4)?;
        let shots = raw.count_or("pfd_shots", 200)?;
        let estimator = match raw.take("estimator").map(|(_, v)| v).as_deref() {
            None | Some("2pfd") => Estimator::Pfd { h, shots: to_u32("pfd_shots", shots)? },
            Some("slope") => Estimator::Slope { shots: to_u32("pfd_shots", shots)? },
            Some(other) => return Err(Error::Config(format!("estimator must be slope or 2pfd, got '{other}'"))),
        };
        if !(h > 0.0) {
            return Err(Error::Config(format!("pfd_h must be positive, got {h}")));
        }
        let pfd_seeds = to_u32("pfd_seeds", raw.count_or("pfd_seeds", 100)?)?;
        if pfd_seeds == 0 {
            return Err(Error::Config("pfd_seeds must be at least 1".into()));
        }

        let scan = ScanPlan {
            re_max: raw.num_or("scan_re_max", 4.0)?,
            n_re: raw.count_or("scan_n_re", 21)? as usize,
            im_max: raw.num_or("scan_im_max", 4.0)?,
            n_im: raw.count_or("scan_n_im", 11)? as usize,
            grid_shots: to_u32("scan_shots", raw.count_or("scan_shots", 250)?)?,
            line_v_max: raw.num_or("line_v_max", 5.0)?,
            line_n: raw.count_or("line_n", 50)? as usize,
            line_shots: to_u32("line_shots", raw.count_or("line_shots", 500)?)?,
            pad_radius: raw.num_or("pad_radius", 10.0)?,
        };
        if scan.n_re < 2 || scan.n_im < 2 || scan.line_n < 3 {
            return Err(Error::Config("scans need at least 2 points per axis and 3 line points".into()));
        }

        let seed = raw.count_or("seed", 1)?;
        let cutoff = raw.count_or("cutoff", 100)? as usize;
        let lindblad_cutoff = raw.count_or("lindblad_cutoff", 120)? as usize;
        if cutoff < 2 || lindblad_cutoff < 2 {
            return Err(Error::Config("cutoffs must be at least 2".into()));
        }
        let sample_every = match (raw.num("sample_every_ms")?, raw.take("sample_every_steps")) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give only one of sample_every_ms and sample_every_steps".into()))
            }
            (None, Some((line, v))) => v.parse::<usize>().ok().filter(|k| *k > 0).ok_or_else(|| {
                Error::Config(format!("line {line}: sample_every_steps expects a positive integer, got '{v}'"))
            })?,
            (every_ms, None) => {
                let every_ms = every_ms.unwrap_or(0.4);
                let ratio = every_ms * 1e-3 / dt;
                if !(ratio >= 1.0 - 1e-9) || (ratio - ratio.round()).abs() > 1e-6 {
                    return Err(Error::Config(format!(
                        "sample_every_ms={every_ms} is not a positive multiple of the step"
                    )));
                }
                ratio.round() as usize
            }
        };
        let max_substep = micro(raw.either("max_substep_us", "max_substep_s")?, 10e-6);
        let thermal_nbar = raw.num_or("thermal_nbar", 0.0)?;
        if !(max_substep > 0.0) || !(thermal_nbar >= 0.0) {
            return Err(Error::Config("max_substep_us must be positive and thermal_nbar nonnegative".into()));
        }
        debug_assert!(raw.map.is_empty(), "unconsumed keys: {:?}", raw.map.keys());

        Ok(Self {
            name,
            potential,
            dt,
            steps,
            x0,
            sideband_pi_time: sideband,
            carrier_pi_time: carrier,
            hardware,
            noise,
            estimator,
            pfd_seeds,
            scan,
            seed,
            cutoff,
            lindblad_cutoff,
            sample_every,
            max_substep,
            thermal_nbar,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checkpoint step indices `0, s, 2s, …, K`.
    pub fn checkpoints(&self) -> Vec<usize> {
        (0..=self.steps).step_by(self.sample_every).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.checkpoints().into_iter().map(|k| k as f64 * self.dt).collect()
    }

    /// Canonical `key=value` text; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let p = &self.potential;
        let mut lines = vec![
            format!("name={}", self.name),
            format!("delta_rad_s={:e}", p.delta),
            format!("lambda={:e}", p.lambda),
            format!("dt_s={:e}", self.dt),
            format!("steps={}", self.steps),
        ];
        for t in &p.terms {
            lines.push(format!("term{}_b_rad_s={:e}", t.n, t.b));
            lines.push(format!("term{}_phi_rad={:e}", t.n, t.phi));
        }
        let (h, shots, est) = match self.estimator {
            Estimator::Pfd { h, shots } => (h, shots, "2pfd"),
            Estimator::Slope { shots } => (h_default(), shots, "slope"),
        };
        let s = &self.scan;
        lines.extend([
            format!("x0={:e}", self.x0),
            format!("sideband_pi_time_s={:e}", self.sideband_pi_time),
            format!("carrier_pi_time_s={:e}", self.carrier_pi_time),
            format!("gamma_phi_per_s={:e}", self.noise.gamma_phi),
            format!("dephasing={}", self.noise.dephasing),
            format!("trotter={}", self.noise.trotter),
            format!("detuned_sdd={}", self.noise.detuned_sdd),
            format!("estimator={est}"),
            format!("pfd_h={h:e}"),
            format!("pfd_shots={shots}"),
            format!("pfd_seeds={}", self.pfd_seeds),
            format!("scan_re_max={:e}", s.re_max),
            format!("scan_n_re={}", s.n_re),
            format!("scan_im_max={:e}", s.im_max),
            format!("scan_n_im={}", s.n_im),
            format!("scan_shots={}", s.grid_shots),
            format!("line_v_max={:e}", s.line_v_max),
            format!("line_n={}", s.line_n),
            format!("line_shots={}", s.line_shots),
            format!("pad_radius={:e}", s.pad_radius),
            format!("seed={}", self.seed),
            format!("cutoff={}", self.cutoff),
            format!("lindblad_cutoff={}", self.lindblad_cutoff),
            format!("sample_every_steps={}", self.sample_every),
            format!("max_substep_s={:e}", self.max_substep),
            format!("thermal_nbar={:e}", self.thermal_nbar),
        ]);
        lines.join("\n") + "\n"
    }
}

fn h_default() -> f64 {
    0.4
}

fn to_u32(key: &str, v: u64) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Config(format!("{key}={v} is too large")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_canonical() {
        let c = ExperimentConfig::default();
        let canonical = FourierPotential::double_well(0.0);
        assert_eq!(c.potential.terms, canonical.terms);
        assert_eq!(c.potential.delta, canonical.delta);
        assert!((c.potential.lambda - canonical.lambda).abs() < 1e-11);
        assert_eq!(c.steps, 78);
        assert_eq!(c.checkpoints().len(), 40);
        assert_eq!(c.hardware, HardwareProfile::trapped_ion());
    }

    #[test]
    fn alternative_keys_agree() {
        let a = ExperimentConfig::parse("alpha0=0.5235987755982988\nt_total_ms=15.6\nterm1_b_rad_s=4000").unwrap();
        let b = ExperimentConfig::parse("lambda=4.242640687119285\nsteps=78\ndelta_rad_s=3141.592653589793").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_round_trip() {
        let c = ExperimentConfig::parse("term1_phi_rad=-0.15707963267948966\nx0=1.2\nseed=9").unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["bogus=1", "lambda=1\nalpha0=1", "dt_us=abc", "steps=3\nt_total_ms=1", "x0", "dephasing=maybe"] {
            assert!(matches!(ExperimentConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }
}
