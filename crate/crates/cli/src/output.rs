use std::io::Write;

use serde::Serialize;

use crate::args::Format;

pub struct Output {
    pub format: Format,
}

impl Output {
    /// One record on stdout: compact JSON, or the text rendering.
    pub fn line<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) {
        let rendered = match self.format {
            Format::Json => serde_json::to_string(value).expect("serializable record"),
            Format::Text => text(),
        };
        let mut stdout = std::io::stdout().lock();
        // A closed pipe is not worth a panic.
        let _ = writeln!(stdout, "{rendered}");
    }
}
