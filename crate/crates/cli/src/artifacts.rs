use std::path::{Path, PathBuf};

use semrag::store::{file_hash, ArtifactState, Manifest};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] semrag::Error),

    #[error("missing artifact {}; run `semrag {stage}` first", path.display())]
    Missing { path: PathBuf, stage: &'static str },

    #[error("stale artifact {artifact}: {detail}; rerun `semrag {stage}` or pass --force")]
    Stale {
        artifact: String,
        detail: String,
        stage: &'static str,
    },

    #[error("{}:{line}: {message}", path.display())]
    Input {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration, input and artifact problems, 3 for model
    /// provider failures, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_provider() => 3,
            CliError::Core(semrag::Error::Config(_) | semrag::Error::Parse { .. }) => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
            CliError::Missing { .. } | CliError::Stale { .. } | CliError::Input { .. } => 2,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

use semrag::store::{CHUNKS, COMMUNITIES, DOCUMENTS, ENTITIES, RELATIONS};

/// Files a stage may write into the run directory.
pub(crate) const RUN_ARTIFACTS: [&str; 5] = [DOCUMENTS, CHUNKS, ENTITIES, RELATIONS, COMMUNITIES];

/// Stage that produces each artifact.
pub(crate) fn producer(artifact: &str) -> &'static str {
    match artifact {
        DOCUMENTS => "ingest",
        CHUNKS => "chunk",
        ENTITIES | RELATIONS | COMMUNITIES => "graph",
        _ => "ingest",
    }
}

/// Checks that `artifact` exists, matches the hash its stage recorded, and
/// that the stage's own run-directory inputs are unchanged since it ran.
///
/// Missing artifacts are always an error. Staleness is an error unless
/// `force` is set, in which case a warning is printed and the artifact used.
pub fn require_fresh(dir: &Path, manifest: &Manifest, artifact: &str, force: bool) -> Result<(), CliError> {
    let stage = producer(artifact);
    let stale = |detail: String| -> Result<(), CliError> {
        let err = CliError::Stale {
            artifact: artifact.to_string(),
            detail,
            stage,
        };
        if force {
            eprintln!("warning: {err}");
            Ok(())
        } else {
            Err(err)
        }
    };
    match manifest.artifact_state(dir, artifact)? {
        ArtifactState::Missing => {
            return Err(CliError::Missing {
                path: dir.join(artifact),
                stage,
            })
        }
        ArtifactState::Unrecorded => stale("not recorded in manifest.json".into())?,
        ArtifactState::Stale { recorded, actual } => stale(format!(
            "content hash {} differs from recorded {}",
            short(&actual),
            short(&recorded)
        ))?,
        ArtifactState::Fresh => {}
    }
    if let Some(record) = manifest.stages.get(stage) {
        for (input, recorded) in &record.inputs {
            if !RUN_ARTIFACTS.contains(&input.as_str()) {
                continue;
            }
            let path = dir.join(input);
            if !path.is_file() {
                stale(format!("{input}, an input of `{stage}`, is gone"))?;
                continue;
            }
            let actual = file_hash(&path)?;
            if &actual != recorded {
                stale(format!("{input} changed after `{stage}` ran"))?;
            }
        }
    }
    Ok(())
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}
