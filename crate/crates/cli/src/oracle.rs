//! Estimator oracle backed by a child process.
//!
//! The command runs under `sh -c`. Each request is one line holding the
//! sample values separated by spaces; the child answers with one number per
//! line. Requests are strictly sequential.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use riskcore::report::format_f64;
use riskcore::{RiskError, Sample};

pub struct ProcessOracle {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    line: String,
}

impl ProcessOracle {
    pub fn spawn(command: &str) -> Result<Self, String> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot start oracle {command:?}: {e}"))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Self { command: command.into(), child, stdin: Some(stdin), stdout, line: String::new() })
    }

    fn failure(&self, what: String) -> RiskError {
        RiskError::OracleFailure(format!("{}: {what}", self.command))
    }

    pub fn evaluate(&mut self, x: &Sample) -> Result<f64, RiskError> {
        let request: Vec<String> = x.values().iter().map(|&v| format_f64(v)).collect();
        let stdin = self.stdin.as_mut().expect("open until drop");
        writeln!(stdin, "{}", request.join(" "))
            .and_then(|_| stdin.flush())
            .map_err(|e| self.failure(format!("write failed: {e}")))?;
        self.line.clear();
        let read = self.stdout.read_line(&mut self.line).map_err(|e| self.failure(format!("read failed: {e}")))?;
        if read == 0 {
            return Err(self.failure("closed its output before answering".into()));
        }
        let answer = self.line.trim();
        answer.parse::<f64>().map_err(|_| self.failure(format!("answered {answer:?}, not a number")))
    }
}

impl Drop for ProcessOracle {
    fn drop(&mut self) {
        // closing stdin tells a well-behaved child to exit
        drop(self.stdin.take());
        if !matches!(self.child.try_wait(), Ok(Some(_))) {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}
