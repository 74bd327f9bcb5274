use std::path::Path;
use std::time::Duration;

use super::{CompileStatus, FrontendConfig, FrontendError, FunctionRecord, WorkdirPolicy};
use crate::lang::LanguageTag;
use crate::process::{run_with_timeout, shell_quote, RunOutcome};

const MAX_MESSAGE: usize = 4000;

/// Compiles one function with its language's frontend.
///
/// Compiler failures and timeouts are recorded in `compile_status`; only a
/// missing command template or an unusable temp directory is an error.
pub fn compile_to_ir(record: &FunctionRecord, cfg: &FrontendConfig) -> Result<FunctionRecord, FrontendError> {
    let LanguageTag::Source(lang) = record.language else {
        return Err(FrontendError::InvalidConfig(format!("{} is not a source language", record.language)));
    };
    let template = cfg.command(lang)?;
    let dir = tempfile::Builder::new()
        .prefix("codeir-fe-")
        .tempdir()
        .map_err(|e| io_err(Path::new("<tempdir>"), e))?;
    let input = dir.path().join(format!("input.{}", lang.extension()));
    let output = dir.path().join("output.ll");
    let mut text = String::new();
    if let Some(prelude) = cfg.preludes.get(&lang) {
        text.push_str(prelude);
        text.push('\n');
    }
    text.push_str(&record.source);
    text.push('\n');
    std::fs::write(&input, text).map_err(|e| io_err(&input, e))?;

    // Relative names keep the temp directory out of the IR (module ids, panic locations).
    let command = template
        .replace("{in}", &shell_quote(&format!("input.{}", lang.extension())))
        .replace("{out}", &shell_quote("output.ll"));
    let mut out = record.clone();
    out.raw_ir = None;
    out.normalized_ir = None;
    out.compile_status = match run_with_timeout(&command, dir.path(), Duration::from_secs_f64(cfg.timeout_secs)) {
        Ok(RunOutcome::Exited { success: true, .. }) => match std::fs::read_to_string(&output) {
            Ok(ir) => {
                out.raw_ir = Some(ir);
                CompileStatus::Ok
            }
            Err(e) => CompileStatus::CompileError(format!("frontend produced no output: {e}")),
        },
        Ok(RunOutcome::Exited { stderr, code, .. }) => {
            let mut msg = stderr.trim().to_string();
            if msg.is_empty() {
                msg = format!("exit status {code:?}");
            }
            truncate_at_char(&mut msg, MAX_MESSAGE);
            CompileStatus::CompileError(msg)
        }
        Ok(RunOutcome::TimedOut) => CompileStatus::Timeout,
        Err(e) => CompileStatus::CompileError(format!("could not start frontend: {e}")),
    };
    if cfg.workdir == WorkdirPolicy::Keep {
        let kept = dir.keep();
        log::info!("kept frontend work directory {}", kept.display());
    }
    Ok(out)
}

fn io_err(path: &Path, source: std::io::Error) -> FrontendError {
    FrontendError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn truncate_at_char(s: &mut String, max: usize) {
    if s.len() > max {
        let mut cut = max;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
}
