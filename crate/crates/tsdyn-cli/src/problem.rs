use tsdyn::dde::{Coef, DelayEquation, History};

/// Start points of fundamental-solution columns.
#[derive(Debug, Clone, PartialEq)]
pub enum SSamples {
    /// At most this many columns, chosen by `default_s_samples`.
    Count(usize),
    List(Vec<f64>),
}

/// An equation with its initial data and default numerics.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub eq: DelayEquation,
    pub history: History,
    pub forcing: Option<Coef>,
    pub h_max: f64,
    pub s_samples: SSamples,
    /// Maps the equation's time variable to the printed one (the pantograph
    /// preset is solved in `u = ln t`).
    pub time_map: Option<fn(f64) -> f64>,
}

impl Problem {
    pub fn new(name: &str, eq: DelayEquation, history: History, h_max: f64) -> Problem {
        Problem {
            name: name.to_string(),
            eq,
            history,
            forcing: None,
            h_max,
            s_samples: SSamples::Count(64),
            time_map: None,
        }
    }

    pub fn display_time(&self, t: f64) -> f64 {
        self.time_map.map_or(t, |f| f(t))
    }
}
