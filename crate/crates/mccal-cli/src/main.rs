fn main() {
    // Die quietly when stdout is a closed pipe (e.g. piping into `head`)
    // instead of panicking mid-write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(mccal_cli::cli_main(std::env::args_os()));
}
