use std::io::{self, BufReader};
use std::net::TcpListener;

use anyhow::Result;
use clap::Args;

use maps_core::oracle::protocol::{serve, StubModel, DEFAULT_MAX_BATCH};

#[derive(Args, Debug, Clone)]
pub struct StubOpts {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_BATCH)]
    pub max_batch: usize,
    /// Serve TCP connections one at a time on this address instead of stdio.
    #[arg(long)]
    pub listen: Option<String>,
}

/// Mean-intensity stub classifier speaking the oracle protocol.
pub fn run(opts: StubOpts) -> Result<()> {
    let mut model = StubModel { classes: opts.classes };
    match &opts.listen {
        None => serve(&mut model, opts.max_batch, io::stdin().lock(), io::stdout().lock())?,
        Some(addr) => {
            let listener = TcpListener::bind(addr)?;
            eprintln!("stub-oracle listening on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                let reader = BufReader::new(stream.try_clone()?);
                if let Err(e) = serve(&mut model, opts.max_batch, reader, stream) {
                    eprintln!("stub-oracle: connection ended: {e}");
                }
            }
        }
    }
    Ok(())
}
