//! Two `cortiplan optimize` invocations with the same config and seeds.

use std::fs;
use std::path::Path;
use std::process::Command;

use crate::Outcome;

const ARGS: &[&str] = &[
    "optimize",
    "--sites",
    "1500",
    "--train",
    "40",
    "--test",
    "10",
    "--n",
    "16",
    "--max-iters",
    "150",
    "--seeds",
    "0,1",
];

fn invoke(out: &Path) -> Result<(), String> {
    let output = Command::new(env!("CARGO_BIN_EXE_cortiplan"))
        .args(ARGS)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| format!("cannot start cortiplan: {e}"))?;
    if !output.status.success() {
        return Err(format!(
            "cortiplan exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        ));
    }
    Ok(())
}

pub fn layouts() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if let Err(e) = invoke(&a).and_then(|_| invoke(&b)) {
        return Outcome { pass: false, summary: format!("determinism: {e}"), details: Vec::new() };
    }
    let mut details = Vec::new();
    let mut pass = true;
    for seed in ["seed0", "seed1"] {
        let rel = Path::new("percept_n16_rho1000").join(seed).join("layout.csv");
        let same = match (fs::read(a.join(&rel)), fs::read(b.join(&rel))) {
            (Ok(x), Ok(y)) => x == y && !x.is_empty(),
            _ => false,
        };
        pass &= same;
        details.push(format!("{}: {}", rel.display(), if same { "byte-identical" } else { "differs or missing" }));
    }
    Outcome { pass, summary: "determinism: repeated `optimize` runs give byte-identical layout CSVs".into(), details }
}
