//! Out-of-process classifier adapter.
//!
//! Protocol, with `<dir>` a scratch directory owned by the adapter:
//!
//! * `program [args] train <dir>`: stdin carries the [`TrainConfig`] as one
//!   JSON line followed by one `{"example": EntityInContext, "label": ...}`
//!   line per training example. The plugin stores its model under `<dir>`.
//! * `program [args] predict <dir>`: stdin carries one `EntityInContext` per
//!   line; stdout must return one `Prediction` per line in the same order.

use std::any::Any;

use serde::Serialize;
use tempfile::TempDir;

use super::{Capabilities, EntityInContext, Model, Prediction, TrainConfig, Trainer};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::ner::run_plugin;

#[derive(Debug, Clone)]
pub struct CommandTrainer {
    pub name: String,
    pub program: String,
    pub args: Vec<String>,
    pub capabilities: Capabilities,
}

impl CommandTrainer {
    pub fn new(
        name: impl Into<String>,
        program: impl Into<String>,
        args: Vec<String>,
        capabilities: Capabilities,
    ) -> Self {
        CommandTrainer {
            name: name.into(),
            program: program.into(),
            args,
            capabilities,
        }
    }

    fn args_with(&self, verb: &str, dir: &TempDir) -> Vec<String> {
        let mut args = self.args.clone();
        args.push(verb.to_string());
        args.push(dir.path().to_string_lossy().into_owned());
        args
    }
}

#[derive(Serialize)]
struct TrainLine<'a> {
    example: &'a EntityInContext,
    label: Label,
}

impl Trainer for CommandTrainer {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn train(
        &self,
        config: &TrainConfig,
        examples: &[(EntityInContext, Label)],
        init: Option<&dyn Model>,
    ) -> Result<Box<dyn Model>> {
        if init.is_some() {
            return Err(Error::Plugin(format!(
                "{} does not support warm starts",
                self.name
            )));
        }
        let dir = tempfile::Builder::new()
            .prefix("adr-plugin-")
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let mut input = serde_json::to_vec(config)?;
        input.push(b'\n');
        for (example, label) in examples {
            serde_json::to_writer(
                &mut input,
                &TrainLine {
                    example,
                    label: *label,
                },
            )?;
            input.push(b'\n');
        }
        run_plugin(&self.program, &self.args_with("train", &dir), &input)?;
        let id = format!(
            "{}:{}",
            self.name,
            dir.path()
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        );
        Ok(Box::new(CommandModel {
            id,
            trainer: self.clone(),
            dir,
        }))
    }
}

/// Model living in a plugin's scratch directory; removed on drop.
pub struct CommandModel {
    id: String,
    trainer: CommandTrainer,
    dir: TempDir,
}

impl Model for CommandModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn scores(&self, examples: &[EntityInContext]) -> Result<Vec<f64>> {
        let mut input = Vec::new();
        for ex in examples {
            serde_json::to_writer(&mut input, ex)?;
            input.push(b'\n');
        }
        let stdout = run_plugin(
            &self.trainer.program,
            &self.trainer.args_with("predict", &self.dir),
            &input,
        )?;
        let preds: Vec<Prediction> = stdout
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        if preds.len() != examples.len() {
            return Err(Error::Plugin(format!(
                "{} returned {} predictions for {} examples",
                self.trainer.name,
                preds.len(),
                examples.len()
            )));
        }
        preds
            .iter()
            .zip(examples)
            .map(|(p, ex)| {
                if p.review_id != ex.review_id || p.span != ex.span {
                    return Err(Error::Plugin(format!(
                        "{} answered out of order at review {}",
                        self.trainer.name, ex.review_id
                    )));
                }
                if p.label != Label::from_score(p.score) {
                    return Err(Error::Plugin(format!(
                        "{} label {} inconsistent with score {}",
                        self.trainer.name, p.label, p.score
                    )));
                }
                Ok(p.score)
            })
            .collect()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
