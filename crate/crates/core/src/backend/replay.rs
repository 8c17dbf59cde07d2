use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GenerationRequest, GenerationResult, Generator, TrialContext};
use crate::error::{Error, Result};

/// One line of a fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub hash: String,
    pub request: GenerationRequest,
    pub response: GenerationResult,
}

/// SHA-256 of the canonical JSON encoding of a request.
pub fn request_hash(request: &GenerationRequest) -> String {
    let canonical = serde_json::to_vec(request).expect("request serializes");
    hex::encode(Sha256::digest(canonical))
}

/// Serves recorded responses keyed by request hash. With a recorder, misses
/// are forwarded and appended to the fixture file.
pub struct ReplayBackend {
    path: PathBuf,
    entries: Mutex<HashMap<String, GenerationResult>>,
    recorder: Option<(Arc<dyn Generator>, Mutex<File>)>,
}

impl ReplayBackend {
    pub fn open(path: &Path, recorder: Option<Arc<dyn Generator>>) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: FixtureEntry = serde_json::from_str(&line)
                    .map_err(|err| Error::Config(format!("{}:{}: {err}", path.display(), n + 1)))?;
                entries.insert(e.hash, e.response);
            }
        } else if recorder.is_none() {
            return Err(Error::Config(format!("fixture {} does not exist", path.display())));
        }
        let recorder = match recorder {
            Some(inner) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                let file = OpenOptions::new().create(true).append(true).open(path)?;
                Some((inner, Mutex::new(file)))
            }
            None => None,
        };
        Ok(Self {
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
            recorder,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Generator for ReplayBackend {
    fn generate(&self, request: &GenerationRequest, context: &TrialContext) -> Result<GenerationResult> {
        let hash = request_hash(request);
        if let Some(r) = self.entries.lock().unwrap().get(&hash) {
            return Ok(r.clone());
        }
        let Some((inner, file)) = &self.recorder else {
            return Err(Error::FixtureMiss(format!("{hash} not in {}", self.path.display())));
        };
        let response = inner.generate(request, context)?;
        let entry = FixtureEntry {
            hash: hash.clone(),
            request: request.clone(),
            response: response.clone(),
        };
        {
            let mut f = file.lock().unwrap();
            writeln!(f, "{}", serde_json::to_string(&entry)?)?;
            f.flush()?;
        }
        self.entries.lock().unwrap().insert(hash, response.clone());
        Ok(response)
    }

    fn name(&self) -> &str {
        "replay"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{RepeatLastBackend, ScriptedBackend};
    use crate::codec::QuantRange;
    use crate::grid_ic::build_grids;
    use crate::metrics::TokenDistribution;
    use crate::solvers::PdeSpec;

    fn ctx() -> TrialContext {
        let (spatial, time) = build_grids(1.0, 2, 0.5, 4).unwrap();
        TrialContext {
            pde: PdeSpec::allen_cahn(),
            spatial,
            time,
            range: QuantRange::new(-1.0, 1.0).unwrap(),
        }
    }

    fn req(prompt: &str) -> GenerationRequest {
        GenerationRequest {
            prompt: prompt.into(),
            max_tokens: 3,
            temperature: 0.6,
            top_k_probs: 20,
            stop: Some(";".into()),
            echo: false,
        }
    }

    #[test]
    fn hash_depends_on_every_field() {
        let a = req("150,500;");
        let mut b = a.clone();
        b.temperature = 0.7;
        assert_ne!(request_hash(&a), request_hash(&b));
        assert_eq!(request_hash(&a), request_hash(&a.clone()));
        assert_eq!(request_hash(&a).len(), 64);
    }

    #[test]
    fn record_then_replay_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx").join("fixture.jsonl");
        let mut scripted = ScriptedBackend::one_hot("151,499");
        scripted.distributions[0] = TokenDistribution::from_probs(vec![("151".into(), 0.1 + 0.2), ("152".into(), 0.7)]);
        let inner = Arc::new(ScriptedBackend::new([Ok(scripted.clone())]));
        let rec = ReplayBackend::open(&path, Some(inner)).unwrap();
        let first = rec.generate(&req("150,500;"), &ctx()).unwrap();
        assert_eq!(first, scripted);
        // second call is served from memory, the script is exhausted
        assert_eq!(rec.generate(&req("150,500;"), &ctx()).unwrap(), first);
        drop(rec);

        let replay = ReplayBackend::open(&path, None).unwrap();
        assert_eq!(replay.len(), 1);
        let again = replay.generate(&req("150,500;"), &ctx()).unwrap();
        assert_eq!(again, first);
        assert!(matches!(replay.generate(&req("150,501;"), &ctx()), Err(Error::FixtureMiss(_))));
    }

    #[test]
    fn missing_fixture_without_recorder_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ReplayBackend::open(&dir.path().join("none.jsonl"), None).is_err());
        let ok = ReplayBackend::open(&dir.path().join("new.jsonl"), Some(Arc::new(RepeatLastBackend))).unwrap();
        assert!(ok.is_empty());
    }
}
