//! Build fingerprint carried on every emitted CSV row.

use std::process::Command;
use std::sync::OnceLock;

static FINGERPRINT: OnceLock<String> = OnceLock::new();

/// `git describe`-style build identifier, falling back to the crate version
/// when the tree is not a git checkout.
pub fn build_fingerprint() -> &'static str {
    FINGERPRINT.get_or_init(|| {
        let git = Command::new("git")
            .args(["describe", "--always", "--dirty", "--tags"])
            .output()
            .ok()
            .filter(|o| o.status.success())
            .and_then(|o| String::from_utf8(o.stdout).ok())
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty());
        match git {
            Some(desc) => format!("v{}-{}", env!("CARGO_PKG_VERSION"), desc),
            None => format!("v{}", env!("CARGO_PKG_VERSION")),
        }
    })
}
