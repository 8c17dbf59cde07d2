use serde::{Deserialize, Serialize};

use super::{split_tokens, GenerationParams, GenerationRequest, GenerationResult, Generator, TrialContext};
use crate::codec::{parse, serialize_slice, token_count, ParseReport};
use crate::error::{Error, Result};
use crate::metrics::{DistributionRecord, TokenDistribution};

/// One generated slice with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceOutput {
    pub codes: Vec<u16>,
    pub text: String,
    pub distributions: Vec<DistributionRecord>,
    /// Every token was a digit group or a delimiter and there was one value
    /// token per spatial point, so positions map to spatial indices.
    pub aligned: bool,
    pub report: ParseReport,
    pub attempts: usize,
}

fn position_records(result: &GenerationResult, n: usize) -> (Vec<DistributionRecord>, bool) {
    let mut records = Vec::with_capacity(result.tokens.len());
    let (mut values, mut separators) = (0, 0);
    let mut aligned = true;
    for (token, dist) in result.tokens.iter().zip(&result.distributions) {
        let separator = match token.as_str() {
            "," | ";" => true,
            t if TokenDistribution::is_numeric(t) => false,
            _ => {
                aligned = false;
                continue;
            }
        };
        let position = if separator { &mut separators } else { &mut values };
        records.push(DistributionRecord {
            position: *position,
            separator,
            distribution: dist.clone(),
        });
        *position += 1;
    }
    (records, aligned && values == n)
}

/// Requests one slice (`2 N_X - 1` tokens, stop at `;`) after `context`.
/// A malformed slice is retried once before failing with the given step.
pub fn generate_slice(
    backend: &dyn Generator,
    trial: &TrialContext,
    context: &str,
    params: GenerationParams,
    step: usize,
) -> Result<SliceOutput> {
    let n = trial.spatial.n_interior();
    let at_boundary = context.ends_with(';');
    let request = GenerationRequest {
        prompt: context.to_string(),
        max_tokens: if at_boundary { token_count(1, n) } else { token_count(1, n) + 1 },
        temperature: params.temperature,
        top_k_probs: params.top_k,
        stop: at_boundary.then(|| ";".to_string()),
        echo: false,
    };
    let mut last_reason = String::new();
    for attempt in 1..=2 {
        let result = backend.generate(&request, trial)?;
        let text = result.text();
        let body = if at_boundary { text.as_str() } else { text.strip_prefix(';').unwrap_or(&text) };
        let report = parse(body, n);
        if let Some(codes) = report.first_complete() {
            let (distributions, aligned) = position_records(&result, n);
            return Ok(SliceOutput {
                codes: codes.to_vec(),
                text: body.to_string(),
                distributions,
                aligned,
                report,
                attempts: attempt,
            });
        }
        last_reason = match report.malformed.first() {
            Some(m) => m.to_string(),
            None if report.slices.is_empty() => format!("no slice in {text:?}"),
            None => format!("unparsable output {text:?}"),
        };
        log::debug!("step {step}: malformed slice on attempt {attempt}: {last_reason}");
    }
    Err(Error::MalformedSlice { step, reason: last_reason })
}

/// Generates `n_steps` slices, feeding each back into the context.
pub fn rollout(
    backend: &dyn Generator,
    trial: &TrialContext,
    context: &str,
    params: GenerationParams,
    n_steps: usize,
) -> Result<Vec<SliceOutput>> {
    if n_steps == 0 {
        return Err(Error::invalid("rollout needs at least one step"));
    }
    let trailing = context.ends_with(';');
    let mut prompt = context.to_string();
    let mut out = Vec::with_capacity(n_steps);
    for step in 0..n_steps {
        let s = generate_slice(backend, trial, &prompt, params, step)?;
        if !trailing {
            prompt.push(';');
        }
        prompt.push_str(&serialize_slice(&s.codes));
        if trailing {
            prompt.push(';');
        }
        out.push(s);
    }
    Ok(out)
}

/// Prompt sent by the tokenization probe.
pub const PROBE_PROMPT: &str = "150,500,850;151,499,849;";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum ProbeStatus {
    Pass,
    Warn(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub status: ProbeStatus,
    pub observed: Vec<String>,
}

/// Checks that the endpoint tokenizes 3-digit groups and delimiters as
/// single tokens by echoing a short prompt.
pub fn probe_tokenization(backend: &dyn Generator, trial: &TrialContext) -> Result<ProbeReport> {
    let request = GenerationRequest {
        prompt: PROBE_PROMPT.to_string(),
        max_tokens: 1,
        temperature: 0.0,
        top_k_probs: 1,
        stop: None,
        echo: true,
    };
    let result = match backend.generate(&request, trial) {
        Ok(r) => r,
        Err(Error::Capability(msg)) => {
            return Ok(ProbeReport {
                status: ProbeStatus::Warn(format!("echo/logprobs unsupported: {msg}")),
                observed: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let mut observed = Vec::new();
    let mut covered = 0;
    for t in &result.tokens {
        if covered == 0 && !t.starts_with(|c: char| c.is_ascii_digit()) {
            // BOS and similar special tokens
            continue;
        }
        if covered >= PROBE_PROMPT.len() {
            break;
        }
        covered += t.len();
        observed.push(t.clone());
    }
    let expected = split_tokens(PROBE_PROMPT);
    let status = if observed == expected {
        ProbeStatus::Pass
    } else if observed.iter().filter(|t| TokenDistribution::is_numeric(t)).all(|t| t.len() == 1) {
        ProbeStatus::Warn("digit-level".into())
    } else {
        ProbeStatus::Warn(format!("irregular tokenization: {observed:?}"))
    };
    Ok(ProbeReport { status, observed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{OracleBackend, RepeatLastBackend, ScriptedBackend};
    use crate::codec::QuantRange;
    use crate::grid_ic::build_grids;
    use crate::solvers::{PdeSpec, Refinement};

    fn trial(n: usize) -> TrialContext {
        let (spatial, time) = build_grids(1.0, n, 0.5, 25).unwrap();
        TrialContext {
            pde: PdeSpec::allen_cahn(),
            spatial,
            time,
            range: QuantRange::new(-1.0, 1.0).unwrap(),
        }
    }

    #[test]
    fn token_budget_is_two_nx_minus_one() {
        let s = ScriptedBackend::new([Ok(ScriptedBackend::one_hot(&vec!["500"; 14].join(",")))]);
        let ctx = format!("{};", vec!["500"; 14].join(","));
        let out = generate_slice(&s, &trial(14), &ctx, GenerationParams::default(), 0).unwrap();
        let req = &s.requests()[0];
        assert_eq!(req.max_tokens, 27);
        assert_eq!(req.stop.as_deref(), Some(";"));
        assert_eq!(req.temperature, 0.6);
        assert_eq!(req.top_k_probs, 20);
        assert!(out.aligned);
        assert_eq!(out.distributions.iter().filter(|d| !d.separator).count(), 14);
    }

    #[test]
    fn scripted_distribution_passes_through() {
        let mut r = ScriptedBackend::one_hot("500,500");
        let d = TokenDistribution::from_probs(vec![("500".into(), 0.5), ("501".into(), 0.5)]);
        r.distributions[2] = d.clone();
        let s = ScriptedBackend::new([Ok(r)]);
        let out = generate_slice(&s, &trial(2), "500,500;", GenerationParams::default(), 0).unwrap();
        let rec = out.distributions.iter().find(|d| !d.separator && d.position == 1).unwrap();
        assert_eq!(rec.distribution, d);
    }

    #[test]
    fn malformed_slice_is_retried_once() {
        let s = ScriptedBackend::new([Ok(ScriptedBackend::one_hot("500")), Ok(ScriptedBackend::one_hot("500,501"))]);
        let out = generate_slice(&s, &trial(2), "500,500;", GenerationParams::default(), 3).unwrap();
        assert_eq!(out.attempts, 2);
        assert_eq!(out.codes, vec![500, 501]);

        let s = ScriptedBackend::new([Ok(ScriptedBackend::one_hot("500")), Ok(ScriptedBackend::one_hot("5x"))]);
        match generate_slice(&s, &trial(2), "500,500;", GenerationParams::default(), 3) {
            Err(Error::MalformedSlice { step: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn context_without_trailing_semicolon() {
        let s = ScriptedBackend::new([Ok(ScriptedBackend::one_hot(";500,501"))]);
        let out = generate_slice(&s, &trial(2), "500,500", GenerationParams::default(), 0).unwrap();
        assert_eq!(out.codes, vec![500, 501]);
        assert_eq!(s.requests()[0].max_tokens, 4);
        assert!(s.requests()[0].stop.is_none());
        let r = rollout(&RepeatLastBackend, &trial(2), "150,500;500,501", GenerationParams::default(), 3).unwrap();
        assert!(r.iter().all(|s| s.codes == vec![500, 501]));
    }

    #[test]
    fn rollout_grows_context_by_one_slice_per_step() {
        let s = ScriptedBackend::new((0..4).map(|i| Ok(ScriptedBackend::one_hot(&format!("50{i},60{i}")))));
        let ctx = "150,151;";
        let out = rollout(&s, &trial(2), ctx, GenerationParams::default(), 4).unwrap();
        assert_eq!(out.len(), 4);
        let reqs = s.requests();
        for (m, r) in reqs.iter().enumerate() {
            let tokens = split_tokens(&r.prompt).len();
            assert_eq!(tokens, split_tokens(ctx).len() + m * 2 * 2);
        }
        assert_eq!(reqs[2].prompt, "150,151;500,600;501,601;");
    }

    #[test]
    fn repeat_last_rollout_is_constant() {
        let r = rollout(&RepeatLastBackend, &trial(3), "150,151,152;300,301,302;", GenerationParams::default(), 10).unwrap();
        assert_eq!(r.len(), 10);
        assert!(r.iter().all(|s| s.codes == vec![300, 301, 302]));
        assert!(rollout(&RepeatLastBackend, &trial(3), "150,151,152;", GenerationParams::default(), 0).is_err());
    }

    #[test]
    fn oracle_rollout_on_stationary_well() {
        let t = trial(14);
        let code = t.range.encode(-1.0);
        let ctx = format!("{};", serialize_slice(&[code; 14]));
        let r = rollout(&OracleBackend::new(Refinement::default()), &t, &ctx, GenerationParams::default(), 3).unwrap();
        assert!(r.iter().all(|s| s.codes == vec![code; 14]));
    }

    #[test]
    fn probe_classifies_tokenizers() {
        let t = trial(3);
        let mut good = ScriptedBackend::one_hot(&format!("{PROBE_PROMPT}1"));
        good.tokens.insert(0, "<s>".into());
        good.distributions.insert(0, TokenDistribution::one_hot("<s>"));
        let s = ScriptedBackend::new([Ok(good)]);
        assert_eq!(probe_tokenization(&s, &t).unwrap().status, ProbeStatus::Pass);

        let digits: Vec<String> = PROBE_PROMPT.chars().map(|c| c.to_string()).collect();
        let r = GenerationResult {
            distributions: digits.iter().map(|d| TokenDistribution::one_hot(d.clone())).collect(),
            tokens: digits,
        };
        let s = ScriptedBackend::new([Ok(r)]);
        assert_eq!(probe_tokenization(&s, &t).unwrap().status, ProbeStatus::Warn("digit-level".into()));

        match probe_tokenization(&RepeatLastBackend, &t).unwrap().status {
            ProbeStatus::Warn(m) => assert!(m.contains("unsupported")),
            ProbeStatus::Pass => panic!("synthetic backend cannot echo"),
        }
    }
}
