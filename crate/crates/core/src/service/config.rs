use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::detect::{ClassicalConfig, MotionMode, RuleSpec, RuleTable, TrackerConfig};
use crate::ingest::SourceSpec;
use crate::motion::MotionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Classical,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub backend: BackendKind,
    /// `HOST:PORT` of the external backend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_address: Option<String>,
    pub timeout_ms: u64,
    pub mode: MotionMode,
    pub merge_gap: u32,
    pub area_ref: f64,
    /// Replaces the built-in rule table when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rules: Option<Vec<RuleSpec>>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        let c = ClassicalConfig::default();
        DetectorConfig {
            backend: BackendKind::Classical,
            external_address: None,
            timeout_ms: 500,
            mode: c.mode,
            merge_gap: c.merge_gap,
            area_ref: c.area_ref,
            rules: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpConfig {
    pub bind: String,
    pub port: u16,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

impl HttpConfig {
    pub fn address(&self) -> String {
        format!("{}:{}", self.bind, self.port)
    }
}

/// Whole-application configuration, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    /// Frames buffered between ingest and detection.
    pub queue_capacity: usize,
    /// Consecutive source errors tolerated before the run stops.
    pub source_retries: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec>,
    pub motion: MotionConfig,
    pub detector: DetectorConfig,
    pub tracker: TrackerConfig,
    pub http: HttpConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            queue_capacity: 8,
            source_retries: 3,
            source: None,
            motion: MotionConfig::default(),
            detector: DetectorConfig::default(),
            tracker: TrackerConfig::default(),
            http: HttpConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<AppConfig, ServiceError> {
        let cfg: AppConfig =
            toml::from_str(text).map_err(|e| ServiceError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<AppConfig, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        AppConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        let bad = |m: String| Err(ServiceError::Config(m));
        if self.queue_capacity == 0 {
            return bad("queue_capacity must be positive".into());
        }
        self.motion
            .validate()
            .map_err(|e| ServiceError::Config(format!("motion: {e}")))?;
        self.tracker
            .validate()
            .map_err(|e| ServiceError::Config(format!("tracker: {e}")))?;
        let d = &self.detector;
        if d.backend == BackendKind::External && d.external_address.is_none() {
            return bad("detector.external_address is required for the external backend".into());
        }
        if d.timeout_ms == 0 {
            return bad("detector.timeout_ms must be positive".into());
        }
        if d.area_ref.is_nan() || d.area_ref <= 0.0 {
            return bad(format!(
                "detector.area_ref must be positive, got {}",
                d.area_ref
            ));
        }
        self.rule_table()?;
        Ok(())
    }

    pub fn rule_table(&self) -> Result<RuleTable, ServiceError> {
        match &self.detector.rules {
            None => Ok(RuleTable::default()),
            Some(specs) => RuleTable::from_specs(specs)
                .map_err(|e| ServiceError::Config(format!("detector.rules: {e}"))),
        }
    }

    pub fn classical(&self) -> Result<ClassicalConfig, ServiceError> {
        Ok(ClassicalConfig {
            motion: self.motion.clone(),
            mode: self.detector.mode,
            merge_gap: self.detector.merge_gap,
            area_ref: self.detector.area_ref,
            rules: self.rule_table()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = AppConfig::default();
        assert_eq!(AppConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(AppConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn full_file() {
        let cfg = AppConfig::from_toml(
            r#"
queue_capacity = 4

[source]
uri = "y4m:scene.y4m"
fps = 25

[motion]
threshold = 30
connectivity = 4

[detector]
backend = "external"
external_address = "127.0.0.1:7000"
mode = "background"

[[detector.rules]]
label = "debris"
when = "mu_r > 10"
weight = 0.5

[tracker]
confirm_frames = 2

[http]
port = 9090
"#,
        )
        .unwrap();
        assert_eq!(cfg.queue_capacity, 4);
        assert_eq!(cfg.source.unwrap().fps, Some(25.0));
        assert_eq!(cfg.motion.threshold, 30);
        assert_eq!(cfg.detector.backend, BackendKind::External);
        assert_eq!(cfg.detector.mode, MotionMode::Background);
        assert_eq!(cfg.detector.rules.as_ref().unwrap().len(), 1);
        assert_eq!(cfg.tracker.confirm_frames, 2);
        assert_eq!(cfg.tracker.drop_frames, 5);
        assert_eq!(cfg.http.address(), "127.0.0.1:9090");
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, key) in [
            ("bogus = 1", "bogus"),
            ("[motion]\nthresh = 3", "thresh"),
            ("[http]\nhost = \"x\"", "host"),
            ("[source]\nuri = \"dir:x\"\npath = \"y\"", "path"),
        ] {
            let err = AppConfig::from_toml(text).unwrap_err().to_string();
            assert!(err.contains(key), "{err}");
        }
    }

    #[test]
    fn semantic_validation() {
        assert!(AppConfig::from_toml("[detector]\nbackend = \"external\"").is_err());
        assert!(AppConfig::from_toml("[motion]\nthreshold = 0").is_err());
        assert!(AppConfig::from_toml("queue_capacity = 0").is_err());
        assert!(AppConfig::from_toml(
            "[[detector.rules]]\nlabel = \"debris\"\nwhen = \"mu_q > 1\""
        )
        .is_err());
        assert!(AppConfig::from_toml("[source]\nuri = \"tcp-connect:nope\"").is_err());
    }
}
