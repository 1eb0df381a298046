use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};

use stylus_teleport::protocol::{ServerMessage, Session};

use crate::ServeArgs;

pub fn run(args: &ServeArgs) -> Result<()> {
    let listener = TcpListener::bind((args.host.as_str(), args.port))
        .with_context(|| format!("binding {}:{}", args.host, args.port))?;
    let addr = listener.local_addr()?;
    println!("listening on {addr}");
    io::stdout().flush()?;

    let busy = Arc::new(AtomicBool::new(false));
    let heartbeat = Duration::from_millis(args.heartbeat_ms.max(1));
    for stream in listener.incoming() {
        let Ok(mut stream) = stream else { continue };
        if busy.swap(true, Ordering::SeqCst) {
            let msg = ServerMessage::Busy {
                msg: "a session is already active".into(),
            };
            let _ = writeln!(stream, "{}", msg.to_line());
            continue;
        }
        let busy = Arc::clone(&busy);
        thread::spawn(move || {
            if let Err(e) = session(stream, heartbeat) {
                eprintln!("session ended: {e}");
            }
            busy.store(false, Ordering::SeqCst);
        });
    }
    Ok(())
}

fn session(stream: TcpStream, heartbeat: Duration) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = io::BufWriter::new(stream.try_clone()?);
    let mut reader = BufReader::new(stream);
    let mut session = Session::default();
    let mut buf = Vec::new();
    let mut last_seen = Instant::now();
    let mut timed_out = false;
    loop {
        let wait = heartbeat.saturating_sub(last_seen.elapsed());
        reader
            .get_ref()
            .set_read_timeout(Some(wait.max(Duration::from_millis(1))))?;
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => return Ok(()),
            Ok(_) if buf.ends_with(b"\n") => {
                last_seen = Instant::now();
                timed_out = false;
                let line = String::from_utf8_lossy(&buf).into_owned();
                buf.clear();
                if line.trim().is_empty() {
                    continue;
                }
                for msg in session.handle_line(line.trim_end()) {
                    writeln!(writer, "{}", msg.to_line())?;
                }
                writer.flush()?;
            }
            // Partial line at EOF.
            Ok(_) => {
                let line = String::from_utf8_lossy(&buf).into_owned();
                for msg in session.handle_line(line.trim_end()) {
                    writeln!(writer, "{}", msg.to_line())?;
                }
                writer.flush()?;
                return Ok(());
            }
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                if last_seen.elapsed() >= heartbeat && !timed_out {
                    writeln!(writer, "{}", session.timeout_reset().to_line())?;
                    writer.flush()?;
                    timed_out = true;
                    last_seen = Instant::now();
                }
            }
            Err(e) => return Err(e),
        }
    }
}
