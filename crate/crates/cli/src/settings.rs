//! Flat `key = value` run configuration, merged from an optional config file
//! and command-line overrides.
//!
//! Files use one `key = value` pair per line; blank lines and lines starting
//! with `#` are ignored. Command-line flags override file keys. The merged
//! map is echoed verbatim into every output file for reproducibility.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use dbcs_core::{
    ArmId, CsConfig, DgpSpec, DgpVariant, Error, Estimand, McConfig, Method, MethodSpec,
    PolicyConfig, PolicyKind, Result,
};

#[derive(Debug, Default, Clone)]
pub struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::ConfigError(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut settings = Self::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::ConfigError(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    idx + 1
                )));
            };
            settings.set(key.trim(), value.trim());
        }
        Ok(settings)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.map.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::ConfigError(format!("missing required config key `{key}`")))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                Error::ConfigError(format!("config key `{key}`: cannot parse `{raw}`"))
            }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.require(key)?
            .split(',')
            .map(|tok| {
                tok.trim().parse().map_err(|_| {
                    Error::ConfigError(format!("config key `{key}`: bad number `{tok}`"))
                })
            })
            .collect()
    }

    /// The merged configuration as `# key = value` comment lines, embedded
    /// at the top of every output file.
    pub fn echo_comment(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            let _ = writeln!(out, "# {k} = {v}");
        }
        out
    }

    pub fn echo_map(&self) -> &BTreeMap<String, String> {
        &self.map
    }
}

fn parse_estimand(raw: &str) -> Result<Estimand> {
    let bad = || Error::ConfigError(format!("estimand `{raw}`: expected arm:W or contrast:W,W'"));
    let (kind, args) = raw.split_once(':').ok_or_else(bad)?;
    match kind.trim() {
        "arm" => Ok(Estimand::Arm(ArmId(args.trim().parse().map_err(|_| bad())?))),
        "contrast" => {
            let (w, w_prime) = args.split_once(',').ok_or_else(bad)?;
            Ok(Estimand::Contrast(
                ArmId(w.trim().parse().map_err(|_| bad())?),
                ArmId(w_prime.trim().parse().map_err(|_| bad())?),
            ))
        }
        _ => Err(bad()),
    }
}

fn parse_method_spec(raw: &str) -> Result<MethodSpec> {
    let raw = raw.trim();
    let (core, contextual) = match raw.strip_suffix("-x") {
        Some(stripped) => (stripped, true),
        None => (raw, false),
    };
    let method = Method::from_str(core)
        .map_err(|_| Error::ConfigError(format!("unknown method `{raw}`")))?;
    Ok(if contextual {
        MethodSpec::with_context(method)
    } else {
        MethodSpec::plain(method)
    })
}

pub fn build_dgp(settings: &Settings) -> Result<DgpSpec> {
    let variant = match settings.require("dgp")? {
        "bernoulli" => DgpVariant::BernoulliIid {
            mu: settings.f64_list("mu")?,
        },
        "ar1" => DgpVariant::Ar1Context {
            rho_ar: settings.f64_or("rho_ar", 0.0)?,
            beta: settings.f64_or("beta", 0.0)?,
            mu: settings.f64_list("mu")?,
            x_bernoulli_p: settings.f64_or("x_bernoulli_p", 0.5)?,
        },
        other => {
            return Err(Error::ConfigError(format!(
                "unknown dgp `{other}` (expected bernoulli or ar1)"
            )))
        }
    };
    let spec = DgpSpec { variant };
    spec.validate()?;
    Ok(spec)
}

pub fn build_policy(settings: &Settings) -> Result<PolicyConfig> {
    let kind = match settings.get("policy").unwrap_or("mean-proportional") {
        "uniform" => PolicyKind::Uniform,
        "mean-proportional" => PolicyKind::MeanProportional,
        other => {
            return Err(Error::ConfigError(format!(
                "unknown policy `{other}` (expected uniform or mean-proportional)"
            )))
        }
    };
    let horizon = settings.u64_or("horizon", 0)?;
    if horizon == 0 {
        return Err(Error::ConfigError("config key `horizon` is required".into()));
    }
    PolicyConfig::with_params(
        kind,
        horizon,
        settings.f64_or("explore_fraction", 0.1)?,
        settings.f64_or("p_floor", 0.01)?,
        settings.f64_or("mean_floor", 0.05)?,
    )
}

pub fn build_cs_config(settings: &Settings) -> Result<CsConfig> {
    let mut cs = CsConfig::new(settings.f64_or("alpha", 0.05)?)?;
    if let Some(eta) = settings.parse::<f64>("eta")? {
        cs = cs.with_eta(eta)?;
    }
    if let Some(m) = settings.parse::<f64>("m")? {
        cs = cs.with_m(m)?;
    }
    if let Some(rho_mix) = settings.parse::<f64>("rho_mix")? {
        cs = cs.with_rho_mix(rho_mix)?;
    }
    Ok(cs)
}

pub fn build_methods(settings: &Settings) -> Result<Vec<MethodSpec>> {
    settings
        .get("methods")
        .unwrap_or("ci,asymp-cs")
        .split(',')
        .map(parse_method_spec)
        .collect()
}

pub fn build_estimand(settings: &Settings) -> Result<Estimand> {
    parse_estimand(settings.get("estimand").unwrap_or("contrast:1,0"))
}

pub fn build_mc_config(settings: &Settings) -> Result<McConfig> {
    let config = McConfig {
        dgp: build_dgp(settings)?,
        policy: build_policy(settings)?,
        cs: build_cs_config(settings)?,
        methods: build_methods(settings)?,
        estimand: build_estimand(settings)?,
        n_reps: settings.u64_or("reps", 1000)?,
        seed: settings.u64_or("seed", 0)?,
        stopping_horizon: settings.parse("stopping_horizon")?,
        cs_check_from: settings.u64_or("cs_check_from", 10)?,
    };
    config.validate()?;
    Ok(config)
}
