use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Error};
use wgbsl_core::synlik::SlMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    Vb,
    Mcmc,
}

/// One of the compared pipelines, e.g. `vb-rbsl-wg` or `mcmc-rbslv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Method {
    pub engine: Engine,
    pub likelihood: SlMethod,
    pub wg: bool,
}

impl Method {
    pub const ALL: [&'static str; 10] = [
        "vb-bsl",
        "vb-rbsl",
        "vb-bsl-wg",
        "vb-rbsl-wg",
        "mcmc-bsl",
        "mcmc-rbsl",
        "mcmc-rbslv",
        "mcmc-bsl-wg",
        "mcmc-rbsl-wg",
        "mcmc-rbslv-wg",
    ];

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let engine = match self.engine {
            Engine::Vb => "vb",
            Engine::Mcmc => "mcmc",
        };
        let sl = match self.likelihood {
            SlMethod::Bsl => "bsl",
            SlMethod::RobustMean => "rbsl",
            SlMethod::RobustVariance => "rbslv",
        };
        write!(f, "{engine}-{sl}{}", if self.wg { "-wg" } else { "" })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let lower = s.trim().to_ascii_lowercase();
        let (body, wg) = match lower.strip_suffix("-wg") {
            Some(b) => (b, true),
            None => (lower.as_str(), false),
        };
        let (engine, sl) = match body.split_once('-') {
            Some(("vb", sl)) => (Engine::Vb, sl),
            Some(("mcmc", sl)) => (Engine::Mcmc, sl),
            _ => bail!("unknown method {s:?}; expected one of {}", Self::ALL.join(", ")),
        };
        let likelihood = match sl {
            "bsl" => SlMethod::Bsl,
            "rbsl" => SlMethod::RobustMean,
            "rbslv" if engine == Engine::Mcmc => SlMethod::RobustVariance,
            _ => bail!("unknown method {s:?}; expected one of {}", Self::ALL.join(", ")),
        };
        Ok(Self { engine, likelihood, wg })
    }
}
