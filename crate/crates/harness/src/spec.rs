//! JSON schedule specs.
//!
//! ```json
//! {"kind": "fair_queue", "n_switch": 10, "c": 10.0}
//! {"kind": "switch", "n_switch": 25, "prompt_refs": ["hard", "learned"]}
//! {"kind": "constant", "prompt_refs": ["learned"], "c": 10.0, "stages": "first"}
//! ```
//!
//! `kind` is one of `constant`, `switch`, `fair_queue`, `i2h`, `h2i`.
//! Prompt refs are `base`, `learned` or `hard`; the latter two pick the
//! sample's category unless pinned with a suffix such as `learned:1`.

use std::fs;
use std::path::Path;

use fairqueue_core::schedule::{
    build_schedule, transition_step, AmplificationSpec, PromptSchedule, ScheduleKind, StageSet, DEFAULT_AMPLIFICATION,
    DEFAULT_TRANSITION_FRACTION,
};
use serde::{Deserialize, Serialize};

use crate::bank::PromptBank;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    Constant,
    Switch,
    FairQueue,
    I2h,
    H2i,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageSel {
    First,
    Second,
    Both,
}

impl From<StageSel> for StageSet {
    fn from(s: StageSel) -> Self {
        match s {
            StageSel::First => StageSet::FIRST,
            StageSel::Second => StageSet::SECOND,
            StageSel::Both => StageSet::BOTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: SpecKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_switch: Option<usize>,
    /// Amplification factor on the attribute tokens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<StageSel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompt_refs: Vec<String>,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self::fair_queue(None, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptRef {
    Base,
    Learned(Option<usize>),
    Hard(Option<usize>),
}

impl PromptRef {
    pub fn parse(s: &str) -> Option<Self> {
        let (name, pin) = match s.split_once(':') {
            Some((n, k)) => (n, Some(k.parse::<usize>().ok()?)),
            None => (s, None),
        };
        match (name, pin) {
            ("base", None) => Some(Self::Base),
            ("learned", k) => Some(Self::Learned(k)),
            ("hard", k) => Some(Self::Hard(k)),
            _ => None,
        }
    }

    fn is_plain(self) -> bool {
        self == Self::Base
    }
}

impl ScheduleSpec {
    pub fn constant(prompt_ref: &str) -> Self {
        Self {
            kind: SpecKind::Constant,
            n_switch: None,
            c: None,
            stages: None,
            prompt_refs: vec![prompt_ref.to_string()],
        }
    }

    pub fn fair_queue(n_switch: Option<usize>, c: Option<f64>) -> Self {
        Self {
            kind: SpecKind::FairQueue,
            n_switch,
            c,
            stages: None,
            prompt_refs: Vec::new(),
        }
    }

    pub fn switch(kind: SpecKind, n_switch: usize) -> Self {
        Self {
            kind,
            n_switch: Some(n_switch),
            c: None,
            stages: None,
            prompt_refs: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::schema("schedule", e.to_string()))
    }

    /// Inline JSON, or the path of a JSON file.
    pub fn from_arg(arg: &str) -> Result<Self> {
        if arg.trim_start().starts_with('{') {
            return Self::from_json(arg);
        }
        let path = Path::new(arg);
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    fn refs(&self) -> Result<Vec<PromptRef>> {
        let defaults: &[&str] = match self.kind {
            SpecKind::Constant => &["learned"],
            SpecKind::FairQueue => &["base", "learned"],
            SpecKind::I2h => &["learned", "hard"],
            SpecKind::H2i => &["hard", "learned"],
            SpecKind::Switch => &[],
        };
        let names: Vec<&str> = if self.prompt_refs.is_empty() {
            defaults.to_vec()
        } else {
            self.prompt_refs.iter().map(String::as_str).collect()
        };
        let want = if self.kind == SpecKind::Constant { 1 } else { 2 };
        if names.len() != want {
            return Err(HarnessError::schema(
                "schedule.prompt_refs",
                format!("{:?} takes {want} prompt refs, got {}", self.kind, names.len()),
            ));
        }
        names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                PromptRef::parse(n).ok_or_else(|| {
                    HarnessError::schema(
                        format!("schedule.prompt_refs[{i}]"),
                        format!("unknown prompt ref {n:?} (expected base, learned[:k] or hard[:k])"),
                    )
                })
            })
            .collect()
    }

    fn n_switch_for(&self, steps: usize) -> Result<usize> {
        match (self.kind, self.n_switch) {
            (SpecKind::Constant, None) => Ok(steps),
            (SpecKind::Constant, Some(n)) if n == steps => Ok(n),
            (SpecKind::Constant, Some(_)) => Err(HarnessError::schema(
                "schedule.n_switch",
                "a constant schedule has no switch step",
            )),
            (SpecKind::FairQueue, None) => Ok(transition_step(DEFAULT_TRANSITION_FRACTION, steps)),
            (_, None) => Err(HarnessError::schema("schedule.n_switch", "required for switching schedules")),
            (_, Some(n)) if n > steps => Err(HarnessError::schema(
                "schedule.n_switch",
                format!("{n} exceeds the step count {steps}"),
            )),
            (_, Some(n)) => Ok(n),
        }
    }

    /// Checks everything that does not depend on the prompt bank.
    pub fn validate(&self, steps: usize) -> Result<()> {
        let refs = self.refs()?;
        self.n_switch_for(steps)?;
        if let Some(c) = self.c {
            if !c.is_finite() || c < 0.0 {
                return Err(HarnessError::schema("schedule.c", format!("must be finite and >= 0, got {c}")));
            }
        }
        if self.kind == SpecKind::FairQueue {
            if !refs[0].is_plain() {
                return Err(HarnessError::schema("schedule.prompt_refs[0]", "prompt queuing starts from base"));
            }
            if refs[1].is_plain() {
                return Err(HarnessError::schema("schedule.prompt_refs[1]", "prompt queuing needs attribute tokens"));
            }
        }
        if self.c.is_some() {
            let stages = self.stage_set();
            let amplified: Vec<(usize, PromptRef)> = refs
                .iter()
                .enumerate()
                .filter(|(i, _)| if *i == 0 { stages.one } else { stages.two })
                .map(|(i, r)| (i, *r))
                .collect();
            if amplified.is_empty() {
                return Err(HarnessError::schema("schedule.stages", "amplification targets a stage this schedule lacks"));
            }
            if let Some((i, _)) = amplified.iter().find(|(_, r)| r.is_plain()) {
                return Err(HarnessError::schema(
                    format!("schedule.prompt_refs[{i}]"),
                    "amplification needs a prompt with attribute tokens",
                ));
            }
        }
        Ok(())
    }

    fn stage_set(&self) -> StageSet {
        match (self.stages, self.kind) {
            (Some(s), _) => s.into(),
            (None, SpecKind::Constant) => StageSet::FIRST,
            (None, _) => StageSet::SECOND,
        }
    }

    /// Amplification factor in effect, if any.
    pub fn factor(&self) -> Option<f64> {
        match (self.kind, self.c) {
            (SpecKind::FairQueue, None) => Some(DEFAULT_AMPLIFICATION),
            (_, c) => c,
        }
    }

    /// The concrete schedule for a sample of `category`.
    pub fn build(&self, bank: &PromptBank, category: usize, steps: usize) -> Result<PromptSchedule> {
        self.validate(steps)?;
        let refs = self.refs()?;
        let n_switch = self.n_switch_for(steps)?;
        let resolve = |r: PromptRef| match r {
            PromptRef::Base => Ok(bank.base().clone()),
            PromptRef::Learned(k) => bank.learned(k.unwrap_or(category)).cloned(),
            PromptRef::Hard(k) => bank.hard(k.unwrap_or(category)).cloned(),
        };
        let prompts = refs.iter().map(|r| resolve(*r)).collect::<Result<Vec<_>>>()?;
        let stages = self.stage_set();
        let amplification = match self.factor() {
            None => None,
            Some(c) => {
                let target = if stages.two && prompts.len() > 1 { &prompts[1] } else { &prompts[0] };
                Some(AmplificationSpec::new(c, target.tsa_token_range().collect(), stages)?)
            }
        };
        let kind = match self.kind {
            SpecKind::Constant => ScheduleKind::Constant,
            SpecKind::FairQueue => ScheduleKind::FairQueue,
            _ => ScheduleKind::SwitchAt,
        };
        let mut it = prompts.into_iter();
        let first = it.next().expect("at least one prompt");
        Ok(build_schedule(kind, first, it.next(), n_switch, steps, amplification)?)
    }
}
