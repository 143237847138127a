//! Bundled plans: the ten-year reference household and its three
//! preference profiles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goals::{PlanConfig, RateSource};

const REFERENCE: &str = include_str!("../presets/reference.json");
const HOME_BUYER: &str = include_str!("../presets/home_buyer.json");
const SAVER: &str = include_str!("../presets/saver.json");
const DEBTOR: &str = include_str!("../presets/debtor.json");

/// Series ids used by [`stochastic`].
pub const INFLATION_SERIES: &str = "cpi";
pub const SAVINGS_SERIES: &str = "tbill";
pub const RETIREMENT_SERIES: &str = "sp500";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    HomeBuyer,
    Saver,
    Debtor,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::HomeBuyer, Profile::Saver, Profile::Debtor];

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::HomeBuyer => "home_buyer",
            Profile::Saver => "saver",
            Profile::Debtor => "debtor",
        }
    }

    /// `(goal id, p, q)` overrides; unlisted weights stay at 1.
    pub fn weights(self) -> &'static [(&'static str, f64, Option<f64>)] {
        match self {
            Profile::HomeBuyer => &[("mortgage", 20.0, None)],
            Profile::Saver => &[
                ("retirement", 20.0, None),
                ("401k", 20.0, Some(20.0)),
                ("ira", 20.0, None),
                ("emergency_fund", 5.0, Some(3.0)),
            ],
            Profile::Debtor => &[
                ("credit_card", 20.0, None),
                ("student_loan", 20.0, None),
                ("emergency_fund", 5.0, Some(3.0)),
            ],
        }
    }

    /// Overwrites the profile's weights on a plan with the reference goal ids.
    pub fn apply(self, plan: &mut PlanConfig) -> Result<()> {
        for &(id, p, q) in self.weights() {
            let g = plan.goal_index(id).ok_or_else(|| {
                Error::config("goals", format!("profile {self} needs a goal `{id}`"))
            })?;
            plan.goals[g].weight_p = p;
            if q.is_some() {
                plan.goals[g].weight_q = q;
            }
        }
        Ok(())
    }

    /// The reference plan with this profile's weights.
    pub fn plan(self) -> PlanConfig {
        let text = match self {
            Profile::HomeBuyer => HOME_BUYER,
            Profile::Saver => SAVER,
            Profile::Debtor => DEBTOR,
        };
        PlanConfig::from_json(text).expect("bundled preset parses")
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "home_buyer" => Ok(Profile::HomeBuyer),
            "saver" => Ok(Profile::Saver),
            "debtor" => Ok(Profile::Debtor),
            _ => Err(Error::config(
                "profile",
                format!("unknown profile `{s}` (expected home_buyer, saver or debtor)"),
            )),
        }
    }
}

/// Ten-year reference household with every weight at 1.
pub fn reference_plan() -> PlanConfig {
    PlanConfig::from_json(REFERENCE).expect("bundled preset parses")
}

/// `plan` with inflation, the mortgage down payment and retirement driven
/// by the bundled historical series. Debt rates stay constant.
pub fn stochastic(mut plan: PlanConfig) -> PlanConfig {
    plan.inflation_source = RateSource::Series(INFLATION_SERIES.into());
    for (id, series) in [
        ("mortgage", SAVINGS_SERIES),
        ("retirement", RETIREMENT_SERIES),
    ] {
        if let Some(g) = plan.goal_index(id) {
            plan.goals[g].rate_source = RateSource::Series(series.into());
        }
    }
    plan
}
