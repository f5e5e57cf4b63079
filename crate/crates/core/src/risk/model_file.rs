//! Text format for risk models.
//!
//! ```text
//! # comment
//! [components]
//! dbw = 0.05
//! sa = 0.1
//!
//! [outcomes]
//! s1            # severity rank defaults to position
//! s2 = 5        # or explicit, strictly increasing
//!
//! [likelihood]
//! exactly_k_faults            # outcome k <=> exactly k faults
//! f=10 s1:0.25 s2:0.75        # or one explicit row per configuration
//!
//! [blame]
//! proportional                # or `custom` followed by rows
//! f=10 s2: 1.0 0.0            # one value per component
//! ```

use super::{BlameFunction, CustomBlame, FaultConfig, FaultModel, Outcome, OutcomeLikelihood, OutcomeSpace, RiskError};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
}

/// A fully parsed and validated model file.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub model: FaultModel,
    pub likelihood: OutcomeLikelihood,
    pub blame: BlameFunction,
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<ModelFile, ModelFileError> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Components,
    Outcomes,
    Likelihood,
    Blame,
}

struct Line<'a> {
    number: usize,
    /// Byte offset of `text` within the raw line.
    offset: usize,
    raw: &'a str,
    text: &'a str,
}

impl Line<'_> {
    fn err_at(&self, sub: &str, message: impl Into<String>) -> ParseError {
        // `sub` is always a slice of `self.raw`.
        let byte = sub.as_ptr() as usize - self.raw.as_ptr() as usize;
        ParseError { line: self.number, column: self.raw[..byte].chars().count() + 1, message: message.into() }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.number, column: self.raw[..self.offset].chars().count() + 1, message: message.into() }
    }
}

fn tokens(s: &str) -> impl Iterator<Item = &str> {
    s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty())
}

fn parse_f64(line: &Line<'_>, tok: &str) -> Result<f64, ParseError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| line.err_at(tok, format!("expected a number, found `{tok}`")))
}

fn parse_config<'a>(line: &Line<'a>, tok: &'a str, n: usize) -> Result<FaultConfig, ParseError> {
    let bits = tok.strip_prefix("f=").ok_or_else(|| line.err_at(tok, "expected `f=<bits>`"))?;
    let f = FaultConfig::parse_bits(bits).ok_or_else(|| line.err_at(tok, format!("`{bits}` is not a bit string")))?;
    if f.len() != n {
        return Err(line.err_at(tok, format!("configuration has {} bits, expected {n}", f.len())));
    }
    Ok(f)
}

enum LikelihoodSpec {
    ExactlyK(usize),
    Rows(Vec<(usize, FaultConfig, Vec<f64>)>),
}

enum BlameSpec {
    Proportional,
    Custom(Vec<(usize, FaultConfig, usize, Vec<f64>)>),
}

pub fn parse_model(text: &str) -> Result<ModelFile, ModelFileError> {
    let mut section: Option<Section> = None;
    let mut seen = Vec::new();
    let mut components: Vec<(String, f64)> = Vec::new();
    let mut outcomes: Vec<Outcome> = Vec::new();
    let mut likelihood: Option<LikelihoodSpec> = None;
    let mut blame: Option<BlameSpec> = None;
    let mut custom_declared = false;

    for (idx, raw) in text.lines().enumerate() {
        let without_comment = raw.split('#').next().unwrap_or("");
        let trimmed = without_comment.trim();
        if trimmed.is_empty() {
            continue;
        }
        let line = Line {
            number: idx + 1,
            offset: without_comment.len() - without_comment.trim_start().len(),
            raw,
            text: trimmed,
        };

        if let Some(name) = line.text.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| line.err("unterminated section header"))?.trim();
            let next = match name {
                "components" => Section::Components,
                "outcomes" => Section::Outcomes,
                "likelihood" => Section::Likelihood,
                "blame" => Section::Blame,
                other => return Err(line.err(format!("unknown section `[{other}]`")).into()),
            };
            if seen.contains(&next) {
                return Err(line.err(format!("section `[{name}]` appears twice")).into());
            }
            seen.push(next);
            section = Some(next);
            continue;
        }

        let Some(current) = section else {
            return Err(line.err("content before the first section header").into());
        };
        let n = components.len();
        match current {
            Section::Components => {
                let (label, value) =
                    line.text.split_once('=').ok_or_else(|| line.err("expected `label = probability`"))?;
                let label = label.trim();
                if label.is_empty() || label.contains(char::is_whitespace) {
                    return Err(line.err("component label must be a single word").into());
                }
                let p = parse_f64(&line, value.trim())?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(line.err_at(value.trim(), format!("probability {p} is outside [0,1]")).into());
                }
                components.push((label.to_string(), p));
            }
            Section::Outcomes => {
                let (label, rank) = match line.text.split_once('=') {
                    Some((l, r)) => {
                        let r = r.trim();
                        let rank = r
                            .parse::<i32>()
                            .map_err(|_| line.err_at(r, format!("expected an integer rank, found `{r}`")))?;
                        (l.trim(), rank)
                    }
                    None => (line.text, outcomes.len() as i32 + 1),
                };
                if label.is_empty() || label.contains(char::is_whitespace) || label.contains(':') {
                    return Err(line.err("outcome label must be a single word without `:`").into());
                }
                outcomes.push(Outcome { label: label.to_string(), severity: rank });
            }
            Section::Likelihood => {
                if line.text == "exactly_k_faults" {
                    if likelihood.is_some() {
                        return Err(line.err("`exactly_k_faults` cannot be combined with other rows").into());
                    }
                    likelihood = Some(LikelihoodSpec::ExactlyK(line.number));
                    continue;
                }
                let mut toks = tokens(line.text);
                let first = toks.next().expect("non-empty line");
                let f = parse_config(&line, first, n)?;
                let mut row = vec![0.0; outcomes.len()];
                for tok in toks {
                    let (label, value) =
                        tok.split_once(':').ok_or_else(|| line.err_at(tok, "expected `outcome:probability`"))?;
                    let s = outcomes
                        .iter()
                        .position(|o| o.label == label)
                        .ok_or_else(|| line.err_at(tok, format!("unknown outcome `{label}`")))?;
                    row[s] = parse_f64(&line, value)?;
                }
                match &mut likelihood {
                    None => likelihood = Some(LikelihoodSpec::Rows(vec![(line.number, f, row)])),
                    Some(LikelihoodSpec::Rows(rows)) => rows.push((line.number, f, row)),
                    Some(LikelihoodSpec::ExactlyK(_)) => {
                        return Err(line.err("`exactly_k_faults` cannot be combined with other rows").into())
                    }
                }
            }
            Section::Blame => match line.text {
                "proportional" if blame.is_none() && !custom_declared => blame = Some(BlameSpec::Proportional),
                "custom" if blame.is_none() && !custom_declared => {
                    custom_declared = true;
                    blame = Some(BlameSpec::Custom(Vec::new()));
                }
                _ => {
                    let Some(BlameSpec::Custom(rows)) = &mut blame else {
                        return Err(line.err("expected `proportional` or `custom`").into());
                    };
                    let (head, values) =
                        line.text.split_once(':').ok_or_else(|| line.err("expected `f=<bits> <outcome>: <values>`"))?;
                    let mut head_toks = tokens(head);
                    let ftok = head_toks.next().ok_or_else(|| line.err("missing configuration"))?;
                    let f = parse_config(&line, ftok, n)?;
                    let stok = head_toks.next().ok_or_else(|| line.err("missing outcome label"))?;
                    let s = outcomes
                        .iter()
                        .position(|o| o.label == stok)
                        .ok_or_else(|| line.err_at(stok, format!("unknown outcome `{stok}`")))?;
                    let vals = tokens(values).map(|t| parse_f64(&line, t)).collect::<Result<Vec<_>, _>>()?;
                    if vals.len() != n {
                        return Err(line.err(format!("expected {n} blame values, found {}", vals.len())).into());
                    }
                    rows.push((line.number, f, s, vals));
                }
            },
        }
    }

    let eof = |message: &str| ParseError { line: text.lines().count().max(1), column: 1, message: message.into() };
    for (sec, name) in [
        (Section::Components, "components"),
        (Section::Outcomes, "outcomes"),
        (Section::Likelihood, "likelihood"),
        (Section::Blame, "blame"),
    ] {
        if !seen.contains(&sec) {
            return Err(eof(&format!("missing section `[{name}]`")).into());
        }
    }

    let (labels, p): (Vec<String>, Vec<f64>) = components.into_iter().unzip();
    let model = FaultModel::new(labels, p)?;
    let n = model.n();
    let space = OutcomeSpace::new(outcomes)?;

    let likelihood = match likelihood.ok_or_else(|| eof("`[likelihood]` section is empty"))? {
        LikelihoodSpec::ExactlyK(line) => OutcomeLikelihood::exactly_k_faults(n, space.clone())
            .map_err(|e| ParseError { line, column: 1, message: e.to_string() })?,
        LikelihoodSpec::Rows(rows) => {
            let mut seen_rows = std::collections::HashMap::new();
            for (line, f, _) in &rows {
                if let Some(prev) = seen_rows.insert(f.index(), *line) {
                    return Err(ParseError {
                        line: *line,
                        column: 1,
                        message: format!("duplicate row for f={f} (first on line {prev})"),
                    }
                    .into());
                }
            }
            OutcomeLikelihood::from_rows(n, space.clone(), rows.into_iter().map(|(_, f, r)| (f, r)))?
        }
    };

    let blame = match blame.ok_or_else(|| eof("`[blame]` section is empty"))? {
        BlameSpec::Proportional => BlameFunction::ProportionalShare,
        BlameSpec::Custom(rows) => {
            let mut table = CustomBlame::zeros(n, space.len())?;
            for (line, f, s, vals) in rows {
                table.set(&f, s, &vals).map_err(|e| ParseError { line, column: 1, message: e.to_string() })?;
            }
            BlameFunction::Custom(table)
        }
    };

    Ok(ModelFile { model, likelihood, blame })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "\
[components]
dbw = 0.05
sa = 0.1
decision = 0.3

[outcomes]
s1
s2
s3
s4

[likelihood]
exactly_k_faults

[blame]
proportional
";

    #[test]
    fn parses_shorthand_model() {
        let mf = parse_model(EXAMPLE).unwrap();
        assert_eq!(mf.model.n(), 3);
        assert_eq!(mf.likelihood.outcomes().len(), 4);
        assert_eq!(mf.likelihood.get(0b110, 2), 1.0);
        assert_eq!(mf.blame, BlameFunction::ProportionalShare);
    }

    #[test]
    fn parses_explicit_rows_and_custom_blame() {
        let text = "\
[components]
a = 0.2
[outcomes]
ok
s₃ = 7
[likelihood]
f=0 ok:1.0
f=1 ok:0.25, s₃:0.75
[blame]
custom
f=1 s₃: 2.0
";
        let mf = parse_model(text).unwrap();
        assert_eq!(mf.likelihood.get(1, 1), 0.75);
        assert_eq!(mf.likelihood.outcomes().outcomes()[1].severity, 7);
        assert_eq!(mf.blame.value(1, 1, 1, 0), 2.0);
        assert_eq!(mf.blame.value(1, 1, 0, 0), 0.0);
    }

    #[test]
    fn reports_location_of_errors() {
        let text = "[components]\na = 0.2\nb = zero\n";
        let err = parse_model(text).unwrap_err();
        let ModelFileError::Parse(p) = err else { panic!("expected parse error") };
        assert_eq!((p.line, p.column), (3, 5));

        let text =
            "[components]\na = 0.2\n[outcomes]\nok\nbad\n[likelihood]\nf=0 ok:1\nf=1 worse:1\n[blame]\nproportional\n";
        let ModelFileError::Parse(p) = parse_model(text).unwrap_err() else { panic!() };
        assert_eq!((p.line, p.column), (8, 5));
    }

    #[test]
    fn missing_rows_and_sections_are_rejected() {
        let missing_row = "[components]\na = 0.2\n[outcomes]\nok\n[likelihood]\nf=0 ok:1\n[blame]\nproportional\n";
        assert!(matches!(parse_model(missing_row), Err(ModelFileError::Risk(RiskError::Model(_)))));
        let no_blame = "[components]\na = 0.2\n[outcomes]\nok\nbad\n[likelihood]\nexactly_k_faults\n";
        assert!(matches!(parse_model(no_blame), Err(ModelFileError::Parse(_))));
        let empty_lik = "[components]\na = 0.2\n[outcomes]\nok\nbad\n[likelihood]\n[blame]\nproportional\n";
        assert!(parse_model(empty_lik).is_err());
    }

    #[test]
    fn too_many_components_is_an_enumeration_error() {
        let mut text = String::from("[components]\n");
        for i in 0..21 {
            text.push_str(&format!("c{i} = 0.1\n"));
        }
        text.push_str("[outcomes]\nok\n[likelihood]\nexactly_k_faults\n[blame]\nproportional\n");
        assert!(matches!(parse_model(&text), Err(ModelFileError::Risk(RiskError::EnumerationLimit(21)))));
    }
}
