use serde::{Deserialize, Serialize};

use super::{split_tokens, GenerationRequest, GenerationResult, Generator, TrialContext};
use crate::codec::{parse, serialize_slice};
use crate::error::{Error, Result};
use crate::metrics::TokenDistribution;
use crate::solvers::{FineStepper, Refinement};

/// Emits one-hot tokens of successive slices produced by `next` from the
/// slices seen so far, honouring `max_tokens` and `stop`.
fn emit(
    request: &GenerationRequest,
    context: &TrialContext,
    mut next: impl FnMut(&[Vec<u16>]) -> Result<Vec<u16>>,
) -> Result<GenerationResult> {
    request.validate()?;
    if request.echo {
        return Err(Error::Capability("synthetic backends do not echo prompts".into()));
    }
    let n = context.spatial.n_interior();
    let report = parse(&request.prompt, n);
    let mut history: Vec<Vec<u16>> = report.complete_slices().map(|s| s.to_vec()).collect();
    if history.is_empty() {
        return Err(Error::invalid("prompt holds no complete slice"));
    }
    let mut need_separator = !request.prompt.is_empty() && !request.prompt.ends_with(';');

    let mut text = String::new();
    let mut tokens = Vec::new();
    'outer: while tokens.len() < request.max_tokens {
        let slice = next(&history)?;
        let mut pieces = Vec::new();
        if need_separator {
            pieces.push(";".to_string());
        }
        pieces.extend(split_tokens(&serialize_slice(&slice)));
        need_separator = true;
        history.push(slice);
        for p in pieces {
            if tokens.len() == request.max_tokens {
                break 'outer;
            }
            if let Some(stop) = &request.stop {
                if format!("{text}{p}").contains(stop.as_str()) {
                    break 'outer;
                }
            }
            text.push_str(&p);
            tokens.push(p);
        }
    }
    let distributions = tokens.iter().map(|t| TokenDistribution::one_hot(t.clone())).collect();
    Ok(GenerationResult { tokens, distributions })
}

/// What the oracle advances with the refined solver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// March from the decoded first slice to the requested level, so slice
    /// `j` is the refined trajectory of the quantized initial condition.
    #[default]
    Trajectory,
    /// Advance the decoded last slice by one step.
    Step,
}

/// Refined reference solver behind the generation interface; output is
/// re-quantized against the trial's range.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    refinement: Refinement,
    mode: OracleMode,
}

impl OracleBackend {
    pub fn new(refinement: Refinement) -> Self {
        Self {
            refinement,
            mode: OracleMode::default(),
        }
    }

    pub fn with_mode(mut self, mode: OracleMode) -> Self {
        self.mode = mode;
        self
    }
}

impl Generator for OracleBackend {
    fn generate(&self, request: &GenerationRequest, context: &TrialContext) -> Result<GenerationResult> {
        let stepper = FineStepper::new(&context.pde, &context.spatial, &context.time, self.refinement)?;
        let range = context.range;
        emit(request, context, |history| {
            let decode = |s: &Vec<u16>| s.iter().map(|c| range.decode(*c)).collect::<Vec<f64>>();
            let next = match self.mode {
                OracleMode::Trajectory => stepper.advance(None, &decode(&history[0]), history.len())?,
                OracleMode::Step => {
                    let current = decode(history.last().expect("non-empty history"));
                    let previous = (context.pde.is_second_order_in_time() && history.len() >= 2)
                        .then(|| decode(&history[history.len() - 2]));
                    stepper.step(previous.as_deref(), &current)?
                }
            };
            Ok(next.into_iter().map(|u| range.encode(u)).collect())
        })
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

/// Persistence forecast: repeats the last complete context slice.
#[derive(Debug, Clone, Copy, Default)]
pub struct RepeatLastBackend;

impl Generator for RepeatLastBackend {
    fn generate(&self, request: &GenerationRequest, context: &TrialContext) -> Result<GenerationResult> {
        emit(request, context, |history| Ok(history.last().expect("non-empty history").clone()))
    }

    fn name(&self) -> &str {
        "repeat_last"
    }
}
