//! SQLite persistence. One connection per operation; WAL mode lets readers
//! proceed while a writer holds the lock.

use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use forge_core::dialogue::{Message, Phase, Role, SpanAnchor, Storyline, Verdict};
use forge_core::persona::PersonaProfile;
use forge_core::pipeline::{ProjectArtifacts, Stage};
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

const SCHEMA: &str = r#"
CREATE TABLE IF NOT EXISTS projects (
    project_id     TEXT PRIMARY KEY,
    channel_name   TEXT NOT NULL,
    corpus_json    TEXT NOT NULL,
    artifacts_json TEXT,
    created_at     TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS jobs (
    job_id      TEXT PRIMARY KEY,
    project_id  TEXT NOT NULL REFERENCES projects(project_id),
    stage       TEXT NOT NULL,
    progress    REAL NOT NULL,
    error       TEXT,
    failed_stage TEXT,
    config_json TEXT NOT NULL,
    created_at  TEXT NOT NULL,
    updated_at  TEXT NOT NULL
);
CREATE UNIQUE INDEX IF NOT EXISTS one_active_job_per_project
    ON jobs(project_id) WHERE stage NOT IN ('DONE', 'FAILED');
CREATE TABLE IF NOT EXISTS personas (
    persona_id   TEXT PRIMARY KEY,
    project_id   TEXT NOT NULL REFERENCES projects(project_id),
    ordinal      INTEGER NOT NULL,
    origin       TEXT NOT NULL,
    profile_json TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
    session_id TEXT PRIMARY KEY,
    project_id TEXT NOT NULL REFERENCES projects(project_id),
    phase      TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS messages (
    message_id   TEXT PRIMARY KEY,
    session_id   TEXT NOT NULL REFERENCES sessions(session_id),
    seq          INTEGER NOT NULL,
    role         TEXT NOT NULL,
    persona_id   TEXT,
    verdict      TEXT,
    message_json TEXT NOT NULL,
    UNIQUE (session_id, seq),
    CHECK (role = 'CREATOR' OR verdict IS NOT NULL)
);
CREATE TABLE IF NOT EXISTS storylines (
    storyline_id TEXT PRIMARY KEY,
    project_id   TEXT NOT NULL REFERENCES projects(project_id),
    topic        TEXT NOT NULL,
    body         TEXT NOT NULL,
    revision     INTEGER NOT NULL,
    created_at   TEXT NOT NULL,
    updated_at   TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS feedback_anchors (
    message_id   TEXT PRIMARY KEY REFERENCES messages(message_id),
    storyline_id TEXT NOT NULL REFERENCES storylines(storyline_id),
    revision     INTEGER NOT NULL,
    span_start   INTEGER NOT NULL,
    span_end     INTEGER NOT NULL,
    persona_id   TEXT NOT NULL,
    mode         TEXT NOT NULL
);
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub project_id: String,
    pub channel_name: String,
    pub created_at: DateTime<Utc>,
    pub has_artifacts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineJob {
    pub job_id: String,
    pub project_id: String,
    pub stage: Stage,
    pub progress: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Stage the job was in when it failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorylineRecord {
    pub storyline_id: String,
    pub project_id: String,
    pub topic: String,
    pub body: String,
    pub revision: u64,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl StorylineRecord {
    pub fn draft(&self) -> Storyline {
        Storyline {
            storyline_id: self.storyline_id.clone(),
            topic: self.topic.clone(),
            body: self.body.clone(),
            revision: self.revision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAnchorRecord {
    pub message_id: String,
    pub persona_id: String,
    pub anchor: SpanAnchor,
}

#[derive(Debug, Clone)]
pub struct Store {
    path: PathBuf,
}

fn db_err(e: rusqlite::Error) -> ApiError {
    ApiError::Internal(format!("database: {e}"))
}

fn json_err(e: serde_json::Error) -> ApiError {
    ApiError::Internal(format!("stored json: {e}"))
}

fn ts(s: String) -> DateTime<Utc> {
    DateTime::parse_from_rfc3339(&s).map(|t| t.with_timezone(&Utc)).unwrap_or_default()
}

fn stage(s: &str) -> Stage {
    Stage::parse(s).unwrap_or(Stage::Failed)
}

fn is_unique_violation(e: &rusqlite::Error) -> bool {
    matches!(
        e,
        rusqlite::Error::SqliteFailure(f, _) if f.extended_code == rusqlite::ffi::SQLITE_CONSTRAINT_UNIQUE
    )
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Store, ApiError> {
        let store = Store {
            path: path.as_ref().to_path_buf(),
        };
        let conn = store.conn()?;
        conn.pragma_update(None, "journal_mode", "WAL").map_err(db_err)?;
        conn.execute_batch(SCHEMA).map_err(db_err)?;
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn conn(&self) -> Result<Connection, ApiError> {
        let conn = Connection::open(&self.path).map_err(db_err)?;
        conn.busy_timeout(Duration::from_secs(10)).map_err(db_err)?;
        conn.pragma_update(None, "foreign_keys", "ON").map_err(db_err)?;
        Ok(conn)
    }

    // Projects

    pub fn create_project(&self, project_id: &str, channel_name: &str, corpus_json: &str) -> Result<(), ApiError> {
        self.conn()?
            .execute(
                "INSERT INTO projects (project_id, channel_name, corpus_json, created_at) VALUES (?1, ?2, ?3, ?4)",
                params![project_id, channel_name, corpus_json, Utc::now().to_rfc3339()],
            )
            .map_err(db_err)?;
        Ok(())
    }

    pub fn list_projects(&self) -> Result<Vec<ProjectSummary>, ApiError> {
        let conn = self.conn()?;
        let mut stmt = conn
            .prepare(
                "SELECT project_id, channel_name, created_at, artifacts_json IS NOT NULL
                 FROM projects ORDER BY created_at, project_id",
            )
            .map_err(db_err)?;
        let rows = stmt
            .query_map([], |r| {
                Ok(ProjectSummary {
                    project_id: r.get(0)?,
                    channel_name: r.get(1)?,
                    created_at: ts(r.get(2)?),
                    has_artifacts: r.get(3)?,
                })
            })
            .map_err(db_err)?;
        rows.collect::<Result<_, _>>().map_err(db_err)
    }

    pub fn project(&self, project_id: &str) -> Result<ProjectSummary, ApiError> {
        self.list_projects()?
            .into_iter()
            .find(|p| p.project_id == project_id)
            .ok_or_else(|| ApiError::NotFound(format!("project `{project_id}`")))
    }

    pub fn corpus_json(&self, project_id: &str) -> Result<String, ApiError> {
        self.conn()?
            .query_row(
                "SELECT corpus_json FROM projects WHERE project_id = ?1",
                [project_id],
                |r| r.get(0),
            )
            .optional()
            .map_err(db_err)?
            .ok_or_else(|| ApiError::NotFound(format!("project `{project_id}`")))
    }

    pub fn artifacts(&self, project_id: &str) -> Result<Option<ProjectArtifacts>, ApiError> {
        let text: Option<Option<String>> = self
            .conn()?
            .query_row(
                "SELECT artifacts_json FROM projects WHERE project_id = ?1",
                [project_id],
                |r| r.get(0),
            )
            .optional()
            .map_err(db_err)?;
        match text {
            None => Err(ApiError::NotFound(format!("project `{project_id}`"))),
            Some(None) => Ok(None),
            Some(Some(t)) => Ok(Some(serde_json::from_str(&t).map_err(json_err)?)),
        }
    }

    pub fn update_artifacts(&self, project_id: &str, artifacts: &ProjectArtifacts) -> Result<(), ApiError> {
        let text = serde_json::to_string(artifacts).map_err(json_err)?;
        self.conn()?
            .execute(
                "UPDATE projects SET artifacts_json = ?2 WHERE project_id = ?1",
                params![project_id, text],
            )
            .map_err(db_err)?;
        Ok(())
    }

    // Jobs

    /// Inserts a job at INGEST. Fails with a conflict when the project
    /// already has an unfinished job.
    pub fn create_job(&self, job_id: &str, project_id: &str, config_json: &str) -> Result<PipelineJob, ApiError> {
        self.project(project_id)?;
        let now = Utc::now().to_rfc3339();
        let res = self.conn()?.execute(
            "INSERT INTO jobs (job_id, project_id, stage, progress, config_json, created_at, updated_at)
             VALUES (?1, ?2, 'INGEST', 0.0, ?3, ?4, ?4)",
            params![job_id, project_id, config_json, now],
        );
        match res {
            Ok(_) => self.job(job_id),
            Err(e) if is_unique_violation(&e) => Err(ApiError::ConflictActiveJob(project_id.to_string())),
            Err(e) => Err(db_err(e)),
        }
    }

    pub fn job(&self, job_id: &str) -> Result<PipelineJob, ApiError> {
        self.conn()?
            .query_row(
                "SELECT job_id, project_id, stage, progress, error, failed_stage, created_at, updated_at
                 FROM jobs WHERE job_id = ?1",
                [job_id],
                |r| {
                    Ok(PipelineJob {
                        job_id: r.get(0)?,
                        project_id: r.get(1)?,
                        stage: stage(&r.get::<_, String>(2)?),
                        progress: r.get(3)?,
                        error: r.get(4)?,
                        failed_stage: r.get::<_, Option<String>>(5)?.as_deref().and_then(Stage::parse),
                        created_at: ts(r.get(6)?),
                        updated_at: ts(r.get(7)?),
                    })
                },
            )
            .optional()
            .map_err(db_err)?
            .ok_or_else(|| ApiError::NotFound(format!("job `{job_id}`")))
    }

    pub fn latest_job(&self, project_id: &str) -> Result<Option<PipelineJob>, ApiError> {
        let id: Option<String> = self
            .conn()?
            .query_row(
                "SELECT job_id FROM jobs WHERE project_id = ?1 ORDER BY created_at DESC, rowid DESC LIMIT 1",
                [project_id],
                |r| r.get(0),
            )
            .optional()
            .map_err(db_err)?;
        id.map(|id| self.job(&id)).transpose()
    }

    pub fn job_count(&self, project_id: &str) -> Result<usize, ApiError> {
        let n: i64 = self
            .conn()?
            .query_row("SELECT COUNT(*) FROM jobs WHERE project_id = ?1", [project_id], |r| r.get(0))
            .map_err(db_err)?;
        Ok(n as usize)
    }

    pub fn set_job_stage(&self, job_id: &str, stage: Stage, progress: f64) -> Result<(), ApiError> {
        self.conn()?
            .execute(
                "UPDATE jobs SET stage = ?2, progress = ?3, updated_at = ?4
                 WHERE job_id = ?1 AND stage NOT IN ('DONE', 'FAILED')",
                params![job_id, stage.as_str(), progress, Utc::now().to_rfc3339()],
            )
            .map_err(db_err)?;
        Ok(())
    }

    pub fn fail_job(&self, job_id: &str, error: &str) -> Result<(), ApiError> {
        self.conn()?
            .execute(
                "UPDATE jobs SET failed_stage = stage, stage = 'FAILED', error = ?2, updated_at = ?3
                 WHERE job_id = ?1 AND stage NOT IN ('DONE', 'FAILED')",
                params![job_id, error, Utc::now().to_rfc3339()],
            )
            .map_err(db_err)?;
        Ok(())
    }

    /// Marks jobs left unfinished by a previous process as failed.
    pub fn fail_interrupted_jobs(&self) -> Result<usize, ApiError> {
        let n = self
            .conn()?
            .execute(
                "UPDATE jobs SET error = 'interrupted at ' || stage || ' by a restart', failed_stage = stage,
                     stage = 'FAILED', updated_at = ?1
                 WHERE stage NOT IN ('DONE', 'FAILED')",
                [Utc::now().to_rfc3339()],
            )
            .map_err(db_err)?;
        Ok(n)
    }

    /// Stores the run's artifacts and personas, replacing any earlier ones,
    /// and marks the job DONE, all in one transaction.
    pub fn complete_job(
        &self,
        job_id: &str,
        project_id: &str,
        artifacts: &ProjectArtifacts,
    ) -> Result<(), ApiError> {
        let mut conn = self.conn()?;
        let tx = conn.transaction().map_err(db_err)?;
        tx.execute(
            "UPDATE projects SET artifacts_json = ?2 WHERE project_id = ?1",
            params![project_id, serde_json::to_string(artifacts).map_err(json_err)?],
        )
        .map_err(db_err)?;
        tx.execute("DELETE FROM personas WHERE project_id = ?1", [project_id])
            .map_err(db_err)?;
        for (i, p) in artifacts.personas.iter().enumerate() {
            insert_persona(&tx, project_id, i as i64, p)?;
        }
        tx.execute(
            "UPDATE jobs SET stage = 'DONE', progress = 1.0, updated_at = ?2 WHERE job_id = ?1",
            params![job_id, Utc::now().to_rfc3339()],
        )
        .map_err(db_err)?;
        tx.commit().map_err(db_err)
    }

    // Personas

    pub fn personas(&self, project_id: &str) -> Result<Vec<PersonaProfile>, ApiError> {
        let conn = self.conn()?;
        let mut stmt = conn
            .prepare("SELECT profile_json FROM personas WHERE project_id = ?1 ORDER BY ordinal")
            .map_err(db_err)?;
        let rows = stmt
            .query_map([project_id], |r| r.get::<_, String>(0))
            .map_err(db_err)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(db_err)?;
        rows.iter().map(|t| serde_json::from_str(t).map_err(json_err)).collect()
    }

    /// The persona and the project it belongs to.
    pub fn persona(&self, persona_id: &str) -> Result<(String, PersonaProfile), ApiError> {
        let row: Option<(String, String)> = self
            .conn()?
            .query_row(
                "SELECT project_id, profile_json FROM personas WHERE persona_id = ?1",
                [persona_id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()
            .map_err(db_err)?;
        let (project, json) = row.ok_or_else(|| ApiError::NotFound(format!("persona `{persona_id}`")))?;
        Ok((project, serde_json::from_str(&json).map_err(json_err)?))
    }

    pub fn add_persona(&self, project_id: &str, p: &PersonaProfile) -> Result<(), ApiError> {
        let conn = self.conn()?;
        let next: i64 = conn
            .query_row(
                "SELECT COALESCE(MAX(ordinal) + 1, 0) FROM personas WHERE project_id = ?1",
                [project_id],
                |r| r.get(0),
            )
            .map_err(db_err)?;
        insert_persona(&conn, project_id, next, p)
    }

    // Sessions and messages

    pub fn create_session(&self, session_id: &str, project_id: &str, phase: Phase) -> Result<(), ApiError> {
        self.conn()?
            .execute(
                "INSERT INTO sessions (session_id, project_id, phase, created_at) VALUES (?1, ?2, ?3, ?4)",
                params![session_id, project_id, phase_str(phase), Utc::now().to_rfc3339()],
            )
            .map_err(db_err)?;
        Ok(())
    }

    /// Project and phase of a session.
    pub fn session(&self, session_id: &str) -> Result<(String, Phase), ApiError> {
        let row: Option<(String, String)> = self
            .conn()?
            .query_row(
                "SELECT project_id, phase FROM sessions WHERE session_id = ?1",
                [session_id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()
            .map_err(db_err)?;
        let (project, phase) = row.ok_or_else(|| ApiError::NotFound(format!("session `{session_id}`")))?;
        Ok((project, if phase == "CREATION" { Phase::Creation } else { Phase::Exploration }))
    }

    pub fn messages(&self, session_id: &str) -> Result<Vec<Message>, ApiError> {
        let conn = self.conn()?;
        let mut stmt = conn
            .prepare("SELECT message_json FROM messages WHERE session_id = ?1 ORDER BY seq")
            .map_err(db_err)?;
        let rows = stmt
            .query_map([session_id], |r| r.get::<_, String>(0))
            .map_err(db_err)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(db_err)?;
        rows.iter().map(|t| serde_json::from_str(t).map_err(json_err)).collect()
    }

    /// Appends messages after the stored ones. The (session, seq) key makes
    /// a concurrent append of the same positions fail instead of interleave.
    pub fn append_messages(&self, session_id: &str, first_seq: usize, messages: &[Message]) -> Result<(), ApiError> {
        let mut conn = self.conn()?;
        let tx = conn.transaction().map_err(db_err)?;
        for (i, m) in messages.iter().enumerate() {
            let verdict = m.verdict.as_ref().map(|v| match v.verdict {
                Verdict::Grounded => "GROUNDED",
                Verdict::HallucinationSuspect => "HALLUCINATION_SUSPECT",
            });
            let role = match m.role {
                Role::Creator => "CREATOR",
                Role::Persona => "PERSONA",
            };
            tx.execute(
                "INSERT INTO messages (message_id, session_id, seq, role, persona_id, verdict, message_json)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                params![
                    m.message_id,
                    session_id,
                    (first_seq + i) as i64,
                    role,
                    m.persona_id,
                    verdict,
                    serde_json::to_string(m).map_err(json_err)?
                ],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    ApiError::Conflict(format!("session `{session_id}` changed concurrently"))
                } else {
                    db_err(e)
                }
            })?;
            if let (Some(anchor), Some(persona)) = (&m.anchor, &m.persona_id) {
                tx.execute(
                    "INSERT INTO feedback_anchors (message_id, storyline_id, revision, span_start, span_end, persona_id, mode)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                    params![
                        m.message_id,
                        anchor.storyline_id,
                        anchor.revision as i64,
                        anchor.start as i64,
                        anchor.end as i64,
                        persona,
                        anchor.mode.as_str()
                    ],
                )
                .map_err(db_err)?;
            }
        }
        tx.commit().map_err(db_err)
    }

    // Storylines

    pub fn create_storyline(&self, id: &str, project_id: &str, topic: &str, body: &str) -> Result<StorylineRecord, ApiError> {
        let now = Utc::now().to_rfc3339();
        self.conn()?
            .execute(
                "INSERT INTO storylines (storyline_id, project_id, topic, body, revision, created_at, updated_at)
                 VALUES (?1, ?2, ?3, ?4, 1, ?5, ?5)",
                params![id, project_id, topic, body, now],
            )
            .map_err(db_err)?;
        self.storyline(id)
    }

    pub fn storyline(&self, id: &str) -> Result<StorylineRecord, ApiError> {
        self.conn()?
            .query_row(
                "SELECT storyline_id, project_id, topic, body, revision, created_at, updated_at
                 FROM storylines WHERE storyline_id = ?1",
                [id],
                |r| {
                    Ok(StorylineRecord {
                        storyline_id: r.get(0)?,
                        project_id: r.get(1)?,
                        topic: r.get(2)?,
                        body: r.get(3)?,
                        revision: r.get::<_, i64>(4)? as u64,
                        created_at: ts(r.get(5)?),
                        updated_at: ts(r.get(6)?),
                    })
                },
            )
            .optional()
            .map_err(db_err)?
            .ok_or_else(|| ApiError::NotFound(format!("storyline `{id}`")))
    }

    pub fn storylines(&self, project_id: &str) -> Result<Vec<StorylineRecord>, ApiError> {
        let conn = self.conn()?;
        let mut stmt = conn
            .prepare("SELECT storyline_id FROM storylines WHERE project_id = ?1 ORDER BY created_at, storyline_id")
            .map_err(db_err)?;
        let ids = stmt
            .query_map([project_id], |r| r.get::<_, String>(0))
            .map_err(db_err)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(db_err)?;
        ids.iter().map(|id| self.storyline(id)).collect()
    }

    /// Compare-and-set body write: succeeds only if the stored revision is
    /// still `expected_revision`.
    pub fn patch_storyline(
        &self,
        id: &str,
        expected_revision: u64,
        body: &str,
        topic: Option<&str>,
    ) -> Result<StorylineRecord, ApiError> {
        let n = self
            .conn()?
            .execute(
                "UPDATE storylines SET body = ?3, topic = COALESCE(?4, topic), revision = revision + 1, updated_at = ?5
                 WHERE storyline_id = ?1 AND revision = ?2",
                params![id, expected_revision as i64, body, topic, Utc::now().to_rfc3339()],
            )
            .map_err(db_err)?;
        let current = self.storyline(id)?;
        if n == 0 {
            return Err(ApiError::RevisionConflict {
                expected: expected_revision,
                current: current.revision,
            });
        }
        Ok(current)
    }

    pub fn anchors(&self, storyline_id: &str) -> Result<Vec<FeedbackAnchorRecord>, ApiError> {
        let conn = self.conn()?;
        let mut stmt = conn
            .prepare(
                "SELECT a.message_id, a.persona_id, a.revision, a.span_start, a.span_end, a.mode
                 FROM feedback_anchors a JOIN messages m ON m.message_id = a.message_id
                 WHERE a.storyline_id = ?1 ORDER BY m.rowid",
            )
            .map_err(db_err)?;
        let rows = stmt
            .query_map([storyline_id], |r| {
                let mode: String = r.get(5)?;
                Ok(FeedbackAnchorRecord {
                    message_id: r.get(0)?,
                    persona_id: r.get(1)?,
                    anchor: SpanAnchor {
                        storyline_id: storyline_id.to_string(),
                        revision: r.get::<_, i64>(2)? as u64,
                        start: r.get::<_, i64>(3)? as usize,
                        end: r.get::<_, i64>(4)? as usize,
                        mode: if mode == "EVALUATION" {
                            forge_core::dialogue::FeedbackMode::Evaluation
                        } else {
                            forge_core::dialogue::FeedbackMode::Suggestion
                        },
                    },
                })
            })
            .map_err(db_err)?;
        rows.collect::<Result<_, _>>().map_err(db_err)
    }
}

fn phase_str(p: Phase) -> &'static str {
    match p {
        Phase::Exploration => "EXPLORATION",
        Phase::Creation => "CREATION",
    }
}

fn insert_persona(conn: &Connection, project_id: &str, ordinal: i64, p: &PersonaProfile) -> Result<(), ApiError> {
    let origin = match p.origin {
        forge_core::persona::Origin::Clustered => "CLUSTERED",
        forge_core::persona::Origin::Custom => "CUSTOM",
    };
    conn.execute(
        "INSERT INTO personas (persona_id, project_id, ordinal, origin, profile_json) VALUES (?1, ?2, ?3, ?4, ?5)",
        params![p.persona_id, project_id, ordinal, origin, serde_json::to_string(p).map_err(json_err)?],
    )
    .map_err(db_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path().join("t.db")).unwrap();
        s.create_project("p1", "Garden", "{}").unwrap();
        (dir, s)
    }

    #[test]
    fn one_active_job_per_project() {
        let (_d, s) = store();
        s.create_job("j1", "p1", "{}").unwrap();
        assert!(matches!(s.create_job("j2", "p1", "{}"), Err(ApiError::ConflictActiveJob(_))));
        s.fail_job("j1", "x").unwrap();
        s.create_job("j3", "p1", "{}").unwrap();
        assert_eq!(s.fail_interrupted_jobs().unwrap(), 1);
        assert_eq!(s.job("j3").unwrap().stage, Stage::Failed);
        let j3 = s.job("j3").unwrap();
        assert!(j3.error.unwrap().contains("INGEST"));
        assert_eq!(j3.failed_stage, Some(Stage::Ingest));
    }

    #[test]
    fn terminal_stage_is_sticky() {
        let (_d, s) = store();
        s.create_job("j1", "p1", "{}").unwrap();
        s.fail_job("j1", "boom").unwrap();
        s.set_job_stage("j1", Stage::Cluster, 0.5).unwrap();
        assert_eq!(s.job("j1").unwrap().stage, Stage::Failed);
    }

    #[test]
    fn storyline_cas() {
        let (_d, s) = store();
        s.create_storyline("st", "p1", "topic", "a").unwrap();
        assert_eq!(s.patch_storyline("st", 1, "b", None).unwrap().revision, 2);
        assert_eq!(s.patch_storyline("st", 2, "c", Some("new")).unwrap().revision, 3);
        assert!(matches!(
            s.patch_storyline("st", 2, "d", None),
            Err(ApiError::RevisionConflict { expected: 2, current: 3 })
        ));
        let st = s.storyline("st").unwrap();
        assert_eq!((st.body.as_str(), st.topic.as_str()), ("c", "new"));
    }

    #[test]
    fn unknown_rows_are_not_found() {
        let (_d, s) = store();
        assert!(matches!(s.persona("nope"), Err(ApiError::NotFound(_))));
        assert!(matches!(s.job("nope"), Err(ApiError::NotFound(_))));
        assert!(matches!(s.storyline("nope"), Err(ApiError::NotFound(_))));
        assert!(matches!(s.create_job("j", "nope", "{}"), Err(ApiError::NotFound(_))));
    }
}
