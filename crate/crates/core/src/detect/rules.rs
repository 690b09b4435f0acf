//! Ordered rule table mapping region features to a label.
//!
//! A rule's `when` string is a conjunction of linear comparisons:
//!
//! ```text
//! predicate := "true" | clause ( "&&" clause )*
//! clause    := sum op sum
//! op        := "<" | "<=" | ">" | ">="
//! sum       := [ "-" ] term ( ( "+" | "-" ) term )*
//! term      := number [ "*" feature ] | feature
//! feature   := mu_r | mu_g | mu_b | sigma_r | sigma_g | sigma_b | s_r | s_g | s_b
//!            | contrast | energy | homogeneity | correlation | area | box_area
//! ```
//!
//! Numbers are decimal literals (`12`, `0.5`, `1e3`). Whitespace is ignored.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::Label;
use crate::features::{ColorMoments, GlcmStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Mu(usize),
    Sigma(usize),
    Skew(usize),
    Contrast,
    Energy,
    Homogeneity,
    Correlation,
    Area,
    BoxArea,
}

impl Feature {
    fn parse(name: &str) -> Option<Feature> {
        let channel = |suffix: &str| match suffix {
            "r" => Some(0),
            "g" => Some(1),
            "b" => Some(2),
            _ => None,
        };
        Some(match name {
            "contrast" => Feature::Contrast,
            "energy" => Feature::Energy,
            "homogeneity" => Feature::Homogeneity,
            "correlation" => Feature::Correlation,
            "area" => Feature::Area,
            "box_area" => Feature::BoxArea,
            _ => {
                let (head, tail) = name.rsplit_once('_')?;
                let c = channel(tail)?;
                match head {
                    "mu" => Feature::Mu(c),
                    "sigma" => Feature::Sigma(c),
                    "s" => Feature::Skew(c),
                    _ => return None,
                }
            }
        })
    }

    fn is_texture(self) -> bool {
        matches!(
            self,
            Feature::Contrast | Feature::Energy | Feature::Homogeneity | Feature::Correlation
        )
    }
}

/// Everything a rule can look at for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeatures {
    pub area: u32,
    pub box_area: u64,
    pub moments: ColorMoments,
    pub texture: GlcmStats,
}

impl RegionFeatures {
    pub fn value(&self, f: Feature) -> f64 {
        match f {
            Feature::Mu(c) => self.moments.channel(c).mu,
            Feature::Sigma(c) => self.moments.channel(c).sigma,
            Feature::Skew(c) => self.moments.channel(c).s,
            Feature::Contrast => self.texture.contrast,
            Feature::Energy => self.texture.energy,
            Feature::Homogeneity => self.texture.homogeneity,
            Feature::Correlation => self.texture.correlation,
            Feature::Area => self.area as f64,
            Feature::BoxArea => self.box_area as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LinearExpr {
    constant: f64,
    terms: Vec<(f64, Feature)>,
}

impl LinearExpr {
    fn eval(&self, x: &RegionFeatures) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(k, f)| acc + k * x.value(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
struct Clause {
    lhs: LinearExpr,
    op: CmpOp,
    rhs: LinearExpr,
}

impl Clause {
    fn holds(&self, x: &RegionFeatures) -> bool {
        let (l, r) = (self.lhs.eval(x), self.rhs.eval(x));
        match self.op {
            CmpOp::Lt => l < r,
            CmpOp::Le => l <= r,
            CmpOp::Gt => l > r,
            CmpOp::Ge => l >= r,
        }
    }

    fn brightness_invariant(&self) -> bool {
        let terms = self.lhs.terms.iter().chain(&self.rhs.terms);
        if terms.clone().any(|(_, f)| f.is_texture()) {
            return false;
        }
        // A uniform shift c moves lhs - rhs by c times the net mu coefficient.
        let net: f64 = self
            .lhs
            .terms
            .iter()
            .filter(|(_, f)| matches!(f, Feature::Mu(_)))
            .map(|(k, _)| k)
            .sum::<f64>()
            - self
                .rhs
                .terms
                .iter()
                .filter(|(_, f)| matches!(f, Feature::Mu(_)))
                .map(|(k, _)| k)
                .sum::<f64>();
        net == 0.0
    }
}

/// A parsed `when` expression; keeps its source text for display.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    source: String,
    clauses: Vec<Clause>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("rule predicate {text:?}: {message} at byte {offset}")]
pub struct RuleParseError {
    pub text: String,
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    And,
    Op(CmpOp),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, (usize, String)> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => {
                out.push((start, Token::Plus));
                i += 1;
            }
            b'-' => {
                out.push((start, Token::Minus));
                i += 1;
            }
            b'*' => {
                out.push((start, Token::Star));
                i += 1;
            }
            b'&' => {
                if bytes.get(i + 1) != Some(&b'&') {
                    return Err((i, "expected '&&'".into()));
                }
                out.push((start, Token::And));
                i += 2;
            }
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, eq) {
                    (b'<', false) => CmpOp::Lt,
                    (b'<', true) => CmpOp::Le,
                    (b'>', false) => CmpOp::Gt,
                    _ => CmpOp::Ge,
                };
                out.push((start, Token::Op(op)));
                i += if eq { 2 } else { 1 };
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| (start, format!("bad number {text:?}")))?;
                out.push((start, Token::Num(v)));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Token::Ident(src[start..i].to_string())));
            }
            _ => return Err((i, format!("unexpected character {:?}", c as char))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [(usize, Token)],
    pos: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, (usize, String)> {
        Err((self.offset(), msg.into()))
    }

    fn term(&mut self) -> Result<(f64, Option<Feature>), (usize, String)> {
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                if self.peek() == Some(&Token::Star) {
                    self.pos += 1;
                    let f = self.feature()?;
                    Ok((v, Some(f)))
                } else {
                    Ok((v, None))
                }
            }
            Some(Token::Ident(_)) => Ok((1.0, Some(self.feature()?))),
            _ => self.err("expected a number or feature name"),
        }
    }

    fn feature(&mut self) -> Result<Feature, (usize, String)> {
        match self.peek().cloned() {
            Some(Token::Ident(name)) => match Feature::parse(&name) {
                Some(f) => {
                    self.pos += 1;
                    Ok(f)
                }
                None => self.err(format!("unknown feature {name:?}")),
            },
            _ => self.err("expected a feature name"),
        }
    }

    fn sum(&mut self) -> Result<LinearExpr, (usize, String)> {
        let mut expr = LinearExpr {
            constant: 0.0,
            terms: Vec::new(),
        };
        let mut sign = 1.0;
        if self.peek() == Some(&Token::Minus) {
            self.pos += 1;
            sign = -1.0;
        }
        loop {
            let (k, f) = self.term()?;
            match f {
                Some(f) => expr.terms.push((sign * k, f)),
                None => expr.constant += sign * k,
            }
            match self.peek() {
                Some(Token::Plus) => sign = 1.0,
                Some(Token::Minus) => sign = -1.0,
                _ => return Ok(expr),
            }
            self.pos += 1;
        }
    }

    fn clause(&mut self) -> Result<Clause, (usize, String)> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Some(Token::Op(op)) => *op,
            _ => return self.err("expected a comparison operator"),
        };
        self.pos += 1;
        let rhs = self.sum()?;
        Ok(Clause { lhs, op, rhs })
    }
}

impl Predicate {
    pub fn parse(source: &str) -> Result<Predicate, RuleParseError> {
        let wrap = |(offset, message): (usize, String)| RuleParseError {
            text: source.to_string(),
            offset,
            message,
        };
        if source.trim() == "true" {
            return Ok(Predicate {
                source: source.to_string(),
                clauses: Vec::new(),
            });
        }
        let tokens = tokenize(source).map_err(wrap)?;
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
            end: source.len(),
        };
        let mut clauses = vec![p.clause().map_err(wrap)?];
        while p.peek() == Some(&Token::And) {
            p.pos += 1;
            clauses.push(p.clause().map_err(wrap)?);
        }
        if p.pos != tokens.len() {
            return Err(wrap((p.offset(), "unexpected trailing input".into())));
        }
        Ok(Predicate {
            source: source.to_string(),
            clauses,
        })
    }

    pub fn matches(&self, x: &RegionFeatures) -> bool {
        self.clauses.iter().all(|c| c.holds(x))
    }

    /// True when adding the same constant to every color sample cannot change
    /// the outcome: mu terms cancel within each clause and no texture term
    /// appears (texture uses quantized levels, which a shift can move).
    pub fn is_brightness_invariant(&self) -> bool {
        self.clauses.iter().all(Clause::brightness_invariant)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// Serialized form of one rule as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub label: Label,
    pub when: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub label: Label,
    pub when: Predicate,
    /// Specificity weight in (0, 1]; scales the confidence of a match.
    pub weight: f64,
}

impl Rule {
    pub fn new(label: Label, when: &str, weight: f64) -> Result<Rule, RuleParseError> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(RuleParseError {
                text: when.to_string(),
                offset: 0,
                message: format!("weight must be in (0, 1], got {weight}"),
            });
        }
        Ok(Rule {
            label,
            when: Predicate::parse(when)?,
            weight,
        })
    }
}

impl TryFrom<&RuleSpec> for Rule {
    type Error = RuleParseError;

    fn try_from(spec: &RuleSpec) -> Result<Rule, RuleParseError> {
        Rule::new(spec.label, &spec.when, spec.weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleTable {
    pub rules: Vec<Rule>,
}

impl RuleTable {
    pub fn from_specs(specs: &[RuleSpec]) -> Result<RuleTable, RuleParseError> {
        Ok(RuleTable {
            rules: specs.iter().map(Rule::try_from).collect::<Result<_, _>>()?,
        })
    }

    pub fn default_specs() -> Vec<RuleSpec> {
        let spec = |label, when: &str, weight| RuleSpec {
            label,
            when: when.to_string(),
            weight,
        };
        vec![
            spec(
                Label::Vegetation,
                "mu_g - mu_r > 20 && mu_g - mu_b > 20",
                0.9,
            ),
            spec(
                Label::Vessel,
                "box_area >= 300 && mu_r > 150 && mu_g > 150 && mu_b > 150 && contrast < 2",
                0.9,
            ),
            spec(Label::Debris, "mu_r - mu_b > 12 && mu_r < 110", 0.8),
        ]
    }

    /// Index of the first rule whose predicate holds.
    pub fn first_match(&self, x: &RegionFeatures) -> Option<usize> {
        self.rules.iter().position(|r| r.when.matches(x))
    }
}

impl Default for RuleTable {
    fn default() -> Self {
        RuleTable::from_specs(&RuleTable::default_specs()).expect("built-in rules parse")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ChannelMoments;

    fn features(rgb: [f64; 3], area: u32) -> RegionFeatures {
        RegionFeatures {
            area,
            box_area: area as u64,
            moments: ColorMoments {
                channels: rgb
                    .iter()
                    .map(|&mu| ChannelMoments {
                        mu,
                        sigma: 1.0,
                        s: 0.0,
                    })
                    .collect(),
            },
            texture: GlcmStats {
                offset: (0, 0),
                contrast: 0.5,
                energy: 0.5,
                homogeneity: 0.9,
                correlation: 0.0,
            },
        }
    }

    #[test]
    fn parses_and_evaluates() {
        let p = Predicate::parse("mu_g - mu_r > 20 && 2*area >= 10").unwrap();
        assert!(p.matches(&features([10.0, 40.0, 0.0], 5)));
        assert!(!p.matches(&features([10.0, 30.0, 0.0], 5)));
        assert!(!p.matches(&features([10.0, 40.0, 0.0], 4)));
        assert!(Predicate::parse("true")
            .unwrap()
            .matches(&features([0.0; 3], 1)));
        assert!(Predicate::parse("-mu_r + 5 < 0")
            .unwrap()
            .matches(&features([6.0, 0.0, 0.0], 1)));
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let e = Predicate::parse("mu_q > 1").unwrap_err();
        assert_eq!(e.offset, 0);
        let e = Predicate::parse("mu_r > 1 &&").unwrap_err();
        assert_eq!(e.offset, 11);
        let e = Predicate::parse("mu_r 1").unwrap_err();
        assert!(e.message.contains("comparison"));
        assert!(Predicate::parse("mu_r > 1 & mu_g > 2").is_err());
        assert!(Predicate::parse("mu_r > 1 mu_g").is_err());
        assert!(Rule::new(Label::Debris, "area > 1", 0.0).is_err());
    }

    #[test]
    fn brightness_invariance_classification() {
        assert!(Predicate::parse("mu_g - mu_r > 20")
            .unwrap()
            .is_brightness_invariant());
        assert!(Predicate::parse("sigma_r > 3 && area > 9")
            .unwrap()
            .is_brightness_invariant());
        assert!(!Predicate::parse("mu_r > 150")
            .unwrap()
            .is_brightness_invariant());
        assert!(!Predicate::parse("contrast < 2")
            .unwrap()
            .is_brightness_invariant());
        assert!(Predicate::parse("mu_r > mu_b")
            .unwrap()
            .is_brightness_invariant());
    }

    #[test]
    fn default_table_first_match() {
        let t = RuleTable::default();
        assert_eq!(t.first_match(&features([30.0, 200.0, 30.0], 50)), Some(0));
        let mut v = features([210.0, 210.0, 215.0], 50);
        v.box_area = 400;
        assert_eq!(t.first_match(&v), Some(1));
        assert_eq!(t.first_match(&features([60.0, 45.0, 30.0], 50)), Some(2));
        assert_eq!(t.first_match(&features([100.0, 100.0, 100.0], 50)), None);
    }
}
