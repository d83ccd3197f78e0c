//! Step-indexed prompt schedules: constant prompts, two-stage switching
//! (I2H / H2I) and prompt queuing with attention amplification.
//!
//! A schedule over `l` steps splits `[0, l)` at `n_switch`: steps
//! `t < n_switch` belong to stage 1 and run the first prompt, steps
//! `t >= n_switch` belong to stage 2 and run the second.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::ComposedPrompt;

/// Default amplification factor for prompt queuing.
pub const DEFAULT_AMPLIFICATION: f64 = 10.0;
/// Default queuing transition as a fraction of the step count.
pub const DEFAULT_TRANSITION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageSet {
    pub one: bool,
    pub two: bool,
}

impl StageSet {
    pub const SECOND: StageSet = StageSet { one: false, two: true };
    pub const FIRST: StageSet = StageSet { one: true, two: false };
    pub const BOTH: StageSet = StageSet { one: true, two: true };

    pub fn contains(&self, stage: Stage) -> bool {
        match stage {
            Stage::One => self.one,
            Stage::Two => self.two,
        }
    }
}

/// Post-softmax scaling of selected token maps: `c * M[token]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationSpec {
    pub factor: f64,
    /// Absolute token (row) indices in the prompt of the active stage.
    pub tokens: Vec<usize>,
    pub stages: StageSet,
}

impl AmplificationSpec {
    pub fn new(factor: f64, tokens: Vec<usize>, stages: StageSet) -> Result<Self> {
        if !factor.is_finite() || factor < 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "amplification factor must be finite and >= 0, got {factor}"
            )));
        }
        if tokens.is_empty() {
            return Err(Error::InvalidSchedule("amplification needs at least one token".into()));
        }
        Ok(Self { factor, tokens, stages })
    }

    /// `c = 1` leaves every map unchanged.
    pub fn is_identity(&self) -> bool {
        self.factor == 1.0
    }

    pub fn applies_to(&self, token: usize) -> bool {
        self.tokens.contains(&token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Constant,
    SwitchAt,
    FairQueue,
}

/// A total function from step to (prompt, amplification).
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSchedule {
    kind: ScheduleKind,
    first: Arc<ComposedPrompt>,
    second: Option<Arc<ComposedPrompt>>,
    n_switch: usize,
    steps: usize,
    amplification: Option<AmplificationSpec>,
}

impl PromptSchedule {
    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_switch(&self) -> usize {
        self.n_switch
    }

    pub fn first(&self) -> &ComposedPrompt {
        &self.first
    }

    pub fn second(&self) -> Option<&ComposedPrompt> {
        self.second.as_deref()
    }

    pub fn amplification(&self) -> Option<&AmplificationSpec> {
        self.amplification.as_ref()
    }

    pub fn stage_of(&self, t: usize) -> Stage {
        if t < self.n_switch {
            Stage::One
        } else {
            Stage::Two
        }
    }

    /// Prompt and (stage-filtered) amplification at step `t`.
    pub fn prompt_at(&self, t: usize) -> Result<(&ComposedPrompt, Option<&AmplificationSpec>)> {
        if t >= self.steps {
            return Err(Error::InvalidStep {
                step: t,
                total: self.steps,
            });
        }
        let stage = self.stage_of(t);
        let prompt = match stage {
            Stage::One => &*self.first,
            Stage::Two => self
                .second
                .as_deref()
                .expect("validated: stage 2 is non-empty only with a second prompt"),
        };
        let amp = self.amplification.as_ref().filter(|a| a.stages.contains(stage));
        Ok((prompt, amp))
    }

    pub fn constant(prompt: Arc<ComposedPrompt>, steps: usize) -> Result<Self> {
        build_schedule(ScheduleKind::Constant, prompt, None, steps, steps, None)
    }

    pub fn switch_at(first: Arc<ComposedPrompt>, second: Arc<ComposedPrompt>, n_switch: usize, steps: usize) -> Result<Self> {
        build_schedule(ScheduleKind::SwitchAt, first, Some(second), n_switch, steps, None)
    }

    /// Learned prompt first, then the hard prompt.
    pub fn i2h(learned: Arc<ComposedPrompt>, hard: Arc<ComposedPrompt>, n_switch: usize, steps: usize) -> Result<Self> {
        Self::switch_at(learned, hard, n_switch, steps)
    }

    /// Hard prompt first, then the learned prompt.
    pub fn h2i(hard: Arc<ComposedPrompt>, learned: Arc<ComposedPrompt>, n_switch: usize, steps: usize) -> Result<Self> {
        Self::switch_at(hard, learned, n_switch, steps)
    }

    /// Base prompt for `n_switch` steps, then the learned prompt with every
    /// attribute token amplified by `c` in stage 2.
    pub fn fair_queue(
        base: Arc<ComposedPrompt>,
        learned: Arc<ComposedPrompt>,
        n_switch: usize,
        c: f64,
        steps: usize,
    ) -> Result<Self> {
        let tokens: Vec<usize> = learned.tsa_token_range().collect();
        let amp = AmplificationSpec::new(c, tokens, StageSet::SECOND)?;
        build_schedule(ScheduleKind::FairQueue, base, Some(learned), n_switch, steps, Some(amp))
    }
}

fn check_tokens(amp: &AmplificationSpec, prompt: &ComposedPrompt, stage: Stage) -> Result<()> {
    let range = prompt.tsa_token_range();
    match amp.tokens.iter().find(|t| !range.contains(t)) {
        Some(t) => Err(Error::InvalidSchedule(format!(
            "amplified token {t} is outside the stage-{} attribute range {range:?}",
            if stage == Stage::One { 1 } else { 2 }
        ))),
        None => Ok(()),
    }
}

/// Validating constructor for every schedule kind.
pub fn build_schedule(
    kind: ScheduleKind,
    first: Arc<ComposedPrompt>,
    second: Option<Arc<ComposedPrompt>>,
    n_switch: usize,
    steps: usize,
    amplification: Option<AmplificationSpec>,
) -> Result<PromptSchedule> {
    if steps == 0 {
        return Err(Error::InvalidSchedule("schedule needs at least one step".into()));
    }
    if n_switch > steps {
        return Err(Error::InvalidSchedule(format!(
            "n_switch {n_switch} exceeds step count {steps}"
        )));
    }
    match kind {
        ScheduleKind::Constant => {
            if second.is_some() {
                return Err(Error::InvalidSchedule("constant schedule takes one prompt".into()));
            }
            if n_switch != steps {
                return Err(Error::InvalidSchedule("constant schedule has no switch step".into()));
            }
        }
        ScheduleKind::SwitchAt | ScheduleKind::FairQueue => {
            let Some(second) = &second else {
                return Err(Error::InvalidSchedule("switching schedule needs a second prompt".into()));
            };
            if first.dim() != second.dim() {
                return Err(Error::InvalidSchedule(format!(
                    "stage prompts have dims {} and {}",
                    first.dim(),
                    second.dim()
                )));
            }
            if kind == ScheduleKind::FairQueue {
                if !first.is_plain() {
                    return Err(Error::InvalidSchedule("prompt queuing starts from a plain base prompt".into()));
                }
                if second.is_plain() {
                    return Err(Error::InvalidSchedule("prompt queuing needs a learned prompt in stage 2".into()));
                }
            }
        }
    }
    if let Some(amp) = &amplification {
        if amp.stages.one {
            check_tokens(amp, &first, Stage::One)?;
        }
        if amp.stages.two {
            match &second {
                Some(s) => check_tokens(amp, s, Stage::Two)?,
                None => {
                    return Err(Error::InvalidSchedule(
                        "stage-2 amplification on a schedule without stage 2".into(),
                    ))
                }
            }
        }
    }
    Ok(PromptSchedule {
        kind,
        first,
        second,
        n_switch,
        steps,
        amplification,
    })
}

/// `round(fraction * steps)`.
pub fn transition_step(fraction: f64, steps: usize) -> usize {
    (fraction * steps as f64).round() as usize
}

#[derive(Debug, Clone)]
pub struct AblationPoint {
    pub c: f64,
    pub fraction: f64,
    pub n_switch: usize,
    pub schedule: PromptSchedule,
}

/// Prompt-queuing schedules over the product of factors and transitions.
pub fn ablation_grid(
    c_values: &[f64],
    fractions: &[f64],
    steps: usize,
    base: Arc<ComposedPrompt>,
    learned: Arc<ComposedPrompt>,
) -> Result<Vec<AblationPoint>> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::InvalidSchedule(format!("transition fraction {f} outside [0, 1]")));
    }
    let mut out = Vec::with_capacity(c_values.len() * fractions.len());
    for &c in c_values {
        for &fraction in fractions {
            let n_switch = transition_step(fraction, steps);
            let schedule = PromptSchedule::fair_queue(base.clone(), learned.clone(), n_switch, c, steps)?;
            out.push(AblationPoint {
                c,
                fraction,
                n_switch,
                schedule,
            });
        }
    }
    Ok(out)
}
