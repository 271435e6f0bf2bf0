use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use imos::prompt::VerdictKind;
use imos::thinking::ThinkingTrace;

use crate::error::{exit, io_error, CliError};

fn one_line(s: &str, max: usize) -> String {
    let flat: String = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= max {
        flat
    } else {
        flat.chars().take(max).collect::<String>() + "…"
    }
}

pub(crate) fn summarize(trace: &ThinkingTrace, calls: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "image:       {}", trace.image_id);
    let _ = writeln!(out, "status:      {:?}", trace.status);
    let _ = writeln!(out, "iterations:  {} of {}", trace.iterations.len(), trace.config.max_iterations);
    let _ = writeln!(out, "search:      {}", one_line(&trace.search_reply, 100));
    for (k, it) in trace.iterations.iter().enumerate() {
        let verdict = match it.verdict.kind {
            VerdictKind::Correct => "correct",
            VerdictKind::Incorrect if it.verdict_parsed => "incorrect",
            VerdictKind::Incorrect => "incorrect (unparsed)",
        };
        let _ = writeln!(
            out,
            "[{k}] T = {}\n    {} px, mask {}{}\n    verdict: {verdict}: {}",
            one_line(&it.prompt_t, 100),
            it.foreground_pixels,
            it.mask_digest,
            it.mask_ref.as_deref().map(|r| format!(" ({r})")).unwrap_or_default(),
            one_line(it.verdict.explanation.as_deref().or(it.verdict.critique.as_deref()).unwrap_or(""), 100),
        );
    }
    if let Some(e) = &trace.explanation {
        let _ = writeln!(out, "explanation: {}", one_line(e, 200));
    }
    if calls {
        for (n, c) in trace.calls.iter().enumerate() {
            let _ = writeln!(
                out,
                "\n--- call {n}: {:?}{} image {}\n>>> prompt\n{}\n<<< reply\n{}",
                c.purpose,
                c.iteration.map(|i| format!(" (iteration {i})")).unwrap_or_default(),
                c.image_digest,
                c.prompt.trim_end(),
                c.reply.trim_end()
            );
        }
    }
    out
}

pub(crate) fn run(path: &Path, calls: bool) -> Result<u8, CliError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let trace: ThinkingTrace =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: not a trace: {e}", path.display())))?;
    print!("{}", summarize(&trace, calls));
    Ok(exit::OK)
}
