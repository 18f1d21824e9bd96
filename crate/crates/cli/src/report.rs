use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

pub const SCHEMA: u32 = 1;

/// JSON document printed by every command except `spectrum`.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub command: &'static str,
    pub config: Value,
    pub metrics: BTreeMap<String, f64>,
    /// Wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    pub series: BTreeMap<String, Value>,
}

impl RunReport {
    pub fn new(command: &'static str, config: &impl Serialize) -> Self {
        Self {
            schema: SCHEMA,
            command,
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            metrics: BTreeMap::new(),
            timings: BTreeMap::new(),
            seed: None,
            series: BTreeMap::new(),
        }
    }

    pub fn metric(&mut self, name: &str, value: f64) -> &mut Self {
        self.metrics.insert(name.to_owned(), value);
        self
    }

    pub fn timing(&mut self, name: &str, seconds: f64) -> &mut Self {
        self.timings.insert(name.to_owned(), seconds);
        self
    }

    pub fn series(&mut self, name: &str, values: impl Serialize) -> &mut Self {
        self.series
            .insert(name.to_owned(), serde_json::to_value(values).unwrap_or(Value::Null));
        self
    }
}
