//! Regenerates the bundled retake fixture under `fixtures/`.

use std::path::Path;

use lrrg::fixture::{key_csv, retake_fixture, FIXTURE_SEED};
use lrrg::fsutil::atomic_write;
use lrrg::jsonl::to_jsonl;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let f = retake_fixture(FIXTURE_SEED);
    atomic_write(dir.join("retake_fixture.jsonl"), &to_jsonl(&f.studies))?;
    atomic_write(dir.join("retake_key.csv"), key_csv(&f.key).as_bytes())?;
    println!("{} studies, {} planted pairs", f.studies.len(), f.key.len());
    Ok(())
}
