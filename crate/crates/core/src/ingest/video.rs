//! Video frame sources. Decoding is never done in-process: frames come from a
//! pre-extracted `<video>.frames/` directory (with a `duration.txt` sidecar) or
//! from an external command run through a template.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use super::{rel_path, ScanConfig};

pub const FRAME_CMD_ENV: &str = "SARTRIAGE_FRAME_CMD";
pub(crate) const FRAMES_DIR_SUFFIX: &str = ".frames";
const DURATION_FILE: &str = "duration.txt";
const FRAME_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "tif"];

/// Number of frames sampled from a clip: both endpoints included.
pub fn frame_count(duration_s: f64, rate_hz: f64) -> usize {
    if duration_s <= 0.0 {
        return 1;
    }
    // absorb binary rounding, e.g. 0.3 * 10
    (duration_s * rate_hz + 1e-9).floor() as usize + 1
}

pub fn frame_times(duration_s: f64, rate_hz: f64) -> Vec<f64> {
    (0..frame_count(duration_s, rate_hz)).map(|k| k as f64 / rate_hz).collect()
}

pub(crate) struct FrameSource {
    pub duration_s: f64,
    pub frames: Vec<PathBuf>,
}

pub(crate) fn frame_source(root: &Path, video: &Path, config: &ScanConfig) -> Result<FrameSource, String> {
    let mut pre = video.as_os_str().to_owned();
    pre.push(FRAMES_DIR_SUFFIX);
    let pre = PathBuf::from(pre);
    if pre.is_dir() {
        let frames = list_frames(&pre)?;
        let duration_s = match read_duration(&pre)? {
            Some(d) => d,
            None => return Err(format!("{} has no {DURATION_FILE}", pre.display())),
        };
        return Ok(FrameSource { duration_s, frames });
    }

    let template = config
        .frame_cmd
        .clone()
        .or_else(|| std::env::var(FRAME_CMD_ENV).ok().filter(|s| !s.trim().is_empty()))
        .ok_or_else(|| format!("no pre-extracted frame directory and {FRAME_CMD_ENV} is unset"))?;

    let work = config.work_dir.clone().unwrap_or_else(|| root.join(".sartriage").join("frames"));
    let outdir = work.join(format!("{}{FRAMES_DIR_SUFFIX}", rel_path(root, video).replace(['/', '\\'], "__")));
    if outdir.exists() {
        fs::remove_dir_all(&outdir).map_err(|e| format!("clearing {}: {e}", outdir.display()))?;
    }
    fs::create_dir_all(&outdir).map_err(|e| format!("creating {}: {e}", outdir.display()))?;

    let rate = config.sample_rate_hz.to_string();
    let args: Vec<String> = template
        .split_whitespace()
        .map(|tok| {
            tok.replace("{input}", &video.display().to_string())
                .replace("{rate}", &rate)
                .replace("{outdir}", &outdir.display().to_string())
        })
        .collect();
    let (program, rest) = args.split_first().ok_or("empty frame command template")?;
    let output = Command::new(program)
        .args(rest)
        .output()
        .map_err(|e| format!("running frame command `{program}`: {e}"))?;
    if !output.status.success() {
        return Err(format!(
            "frame command exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        ));
    }
    let frames = list_frames(&outdir)?;
    if frames.is_empty() {
        return Err("frame command produced no frames".into());
    }
    let duration_s = read_duration(&outdir)?.unwrap_or((frames.len() - 1) as f64 / config.sample_rate_hz);
    Ok(FrameSource { duration_s, frames })
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("reading {}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    frames.sort();
    Ok(frames)
}

fn read_duration(dir: &Path) -> Result<Option<f64>, String> {
    let p = dir.join(DURATION_FILE);
    if !p.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&p).map_err(|e| format!("reading {}: {e}", p.display()))?;
    let d: f64 = text.trim().parse().map_err(|_| format!("{}: not a number: {:?}", p.display(), text.trim()))?;
    if !(d.is_finite() && d >= 0.0) {
        return Err(format!("{}: negative or non-finite duration {d}", p.display()));
    }
    Ok(Some(d))
}
