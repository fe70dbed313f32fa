fn main() {
    // piping into `head` should truncate output, not panic
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(slicescan::cli::run());
}
