//! Live attach: installs the classifier probes inside each UPF network
//! namespace and streams the kernel trace through the replay pipeline.
//!
//! The probe programs themselves are built separately; this module only
//! needs the compiled object with sections `m1_upf1..3` and `m3_upf1..3`.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use slicelat::Namespace;

use crate::commands::{emit, interrupt_flag, InterruptibleReader, print_summary, run_pipeline};
use crate::config::{AttachSettings, ExperimentConfig};
use crate::error::CliError;
use crate::AttachArgs;

pub fn parse_pid_arg(s: &str) -> Result<(Namespace, u32), String> {
    let (ns, pid) = s.split_once('=').ok_or_else(|| format!("expected upfN=PID, got {s:?}"))?;
    let ns: Namespace = ns.parse().map_err(|e| format!("{e}"))?;
    if !ns.is_upf() {
        return Err(format!("{ns} is not a UPF namespace"));
    }
    let pid = pid.parse().map_err(|e| format!("invalid PID {pid:?}: {e}"))?;
    Ok((ns, pid))
}

/// Section names in the probe object for one UPF.
pub fn sections(ns: Namespace) -> (String, String) {
    (format!("m1_{ns}"), format!("m3_{ns}"))
}

/// Checks that need no external tools: privilege, target namespaces and the
/// probe object.
pub fn preflight(euid: u32, settings: &AttachSettings, proc_root: &Path) -> Result<(), CliError> {
    if euid != 0 {
        return Err(CliError::Privilege(format!(
            "attaching classifier programs requires root (effective uid is {euid})"
        )));
    }
    for &pid in settings.pids.values() {
        let path = proc_root.join(pid.to_string()).join("ns/net");
        if !path.exists() {
            return Err(CliError::NamespaceNotFound { pid, path });
        }
    }
    if !settings.probe_object.is_file() {
        return Err(CliError::ProbeLoad(format!("probe object {} not found", settings.probe_object.display())));
    }
    Ok(())
}

/// Parses `ip -o link show` output into `(ifindex, name)` pairs.
pub fn parse_links(output: &str) -> Vec<(u32, String)> {
    output
        .lines()
        .filter_map(|line| {
            let mut parts = line.splitn(3, ':');
            let index = parts.next()?.trim().parse().ok()?;
            let name = parts.next()?.trim();
            // Interfaces with a link peer print as "name@peer".
            let name = name.split('@').next()?;
            Some((index, name.to_owned()))
        })
        .collect()
}

fn in_namespace(pid: u32, args: &[&str]) -> Vec<String> {
    let mut cmd = vec!["nsenter".to_owned(), "-t".into(), pid.to_string(), "-n".into()];
    cmd.extend(args.iter().map(|s| s.to_string()));
    cmd
}

/// Commands that install the probes for one UPF.
pub fn install_commands(ns: Namespace, pid: u32, s: &AttachSettings) -> Vec<Vec<String>> {
    let obj = s.probe_object.to_string_lossy();
    let (m1, m3) = sections(ns);
    let mut cmds = Vec::new();
    for (iface, sec) in [(&s.n3_iface, &m1), (&s.tun_iface, &m3)] {
        cmds.push(in_namespace(pid, &["tc", "qdisc", "replace", "dev", iface, "clsact"]));
        cmds.push(in_namespace(
            pid,
            &["tc", "filter", "replace", "dev", iface, "ingress", "bpf", "da", "obj", &obj, "sec", sec],
        ));
    }
    cmds
}

/// Commands that remove what [`install_commands`] added.
pub fn detach_commands(pid: u32, s: &AttachSettings) -> Vec<Vec<String>> {
    [&s.n3_iface, &s.tun_iface]
        .into_iter()
        .flat_map(|iface| {
            [
                in_namespace(pid, &["tc", "filter", "del", "dev", iface, "ingress"]),
                in_namespace(pid, &["tc", "qdisc", "del", "dev", iface, "clsact"]),
            ]
        })
        .collect()
}

fn exec(cmd: &[String]) -> Result<String, String> {
    let out = Command::new(&cmd[0])
        .args(&cmd[1..])
        .output()
        .map_err(|e| format!("cannot run {}: {e}", cmd[0]))?;
    if !out.status.success() {
        return Err(format!(
            "`{}` failed ({}): {}",
            cmd.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Probes installed so far; removed on drop so every exit path detaches.
struct Attachment<'a> {
    settings: &'a AttachSettings,
    pids: Vec<u32>,
}

impl Drop for Attachment<'_> {
    fn drop(&mut self) {
        for &pid in &self.pids {
            for cmd in detach_commands(pid, self.settings) {
                if let Err(e) = exec(&cmd) {
                    eprintln!("slicelat: warning: detach: {e}");
                }
            }
        }
    }
}

fn resolve_interfaces(ns: Namespace, pid: u32, s: &AttachSettings) -> Result<(), CliError> {
    let out = exec(&in_namespace(pid, &["ip", "-o", "link", "show"])).map_err(CliError::ProbeLoad)?;
    let links = parse_links(&out);
    for iface in [&s.n3_iface, &s.tun_iface] {
        // The TUN index changes whenever the UPF restarts, so it is looked
        // up afresh on every attach rather than cached.
        let (index, _) = links
            .iter()
            .find(|(_, name)| name == iface)
            .ok_or_else(|| CliError::InterfaceNotFound { iface: iface.clone(), pid })?;
        eprintln!("{ns}: {iface} is ifindex {index} in the namespace of {pid}");
    }
    Ok(())
}

fn merge_args(cfg: &mut ExperimentConfig, args: AttachArgs) {
    let a = &mut cfg.attach;
    a.pids.extend(args.pids);
    if let Some(v) = args.probe_object {
        a.probe_object = v;
    }
    if let Some(v) = args.n3_iface {
        a.n3_iface = v;
    }
    if let Some(v) = args.tun_iface {
        a.tun_iface = v;
    }
    if let Some(v) = args.buffer_kb {
        a.buffer_kb = v;
    }
    if let Some(v) = args.tracing_dir {
        a.tracing_dir = v;
    }
    if let Some(v) = args.load {
        cfg.pipeline.load = v;
    }
}

pub fn run(mut cfg: ExperimentConfig, args: AttachArgs) -> Result<(), CliError> {
    let dry_run = args.dry_run;
    merge_args(&mut cfg, args);
    cfg.validate()?;
    if cfg.attach.pids.is_empty() {
        return Err(CliError::Config("no UPF processes given (use --pid upfN=PID)".into()));
    }
    let s = &cfg.attach;
    if dry_run {
        let mut plan = String::new();
        for (&ns, &pid) in &s.pids {
            for cmd in install_commands(ns, pid, s) {
                plan += &format!("{}\n", cmd.join(" "));
            }
        }
        plan += &format!("echo {} > {}\n", s.buffer_kb, s.tracing_dir.join("buffer_size_kb").display());
        plan += &format!("stream {} -> {}\n", s.tracing_dir.join("trace_pipe").display(), cfg.out.display());
        return emit(&plan);
    }

    // SAFETY: geteuid has no preconditions and cannot fail.
    let euid = unsafe { libc::geteuid() };
    preflight(euid, s, Path::new("/proc"))?;
    for (&ns, &pid) in &s.pids {
        resolve_interfaces(ns, pid, s)?;
    }

    let mut attachment = Attachment { settings: s, pids: Vec::new() };
    for (&ns, &pid) in &s.pids {
        attachment.pids.push(pid);
        for cmd in install_commands(ns, pid, s) {
            exec(&cmd).map_err(CliError::ProbeLoad)?;
        }
    }
    let buffer = s.tracing_dir.join("buffer_size_kb");
    fs::write(&buffer, format!("{}\n", s.buffer_kb))
        .map_err(|e| CliError::ProbeLoad(format!("{}: {e}", buffer.display())))?;

    let pipe: PathBuf = s.tracing_dir.join("trace_pipe");
    let source = File::open(&pipe).map_err(CliError::io(&pipe))?;
    let interrupt = interrupt_flag();
    eprintln!("streaming {} (Ctrl-C to stop)", pipe.display());
    let reader = BufReader::with_capacity(1 << 16, InterruptibleReader::spawn(source, Arc::clone(&interrupt)));
    let summary = run_pipeline(cfg.pipeline.clone(), &cfg.out, vec![(pipe, Box::new(reader))], Some(&interrupt))?;
    drop(attachment);
    print_summary("attach", &summary);
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::config::ExperimentConfig;

    fn settings(pids: &[(Namespace, u32)], obj: PathBuf) -> AttachSettings {
        AttachSettings { pids: pids.iter().copied().collect::<BTreeMap<_, _>>(), probe_object: obj, ..ExperimentConfig::default().attach }
    }

    #[test]
    fn pid_arguments() {
        assert_eq!(parse_pid_arg("upf2=123").unwrap(), (Namespace::Upf2, 123));
        assert!(parse_pid_arg("smf=1").is_err());
        assert!(parse_pid_arg("upf1").is_err());
        assert!(parse_pid_arg("upf1=x").is_err());
    }

    #[test]
    fn preflight_error_classes() {
        let dir = tempfile::tempdir().unwrap();
        let obj = dir.path().join("probe.o");
        fs::write(&obj, b"\x7fELF").unwrap();
        fs::create_dir_all(dir.path().join("proc/77/ns")).unwrap();
        fs::write(dir.path().join("proc/77/ns/net"), b"").unwrap();
        let proc_root = dir.path().join("proc");

        let s = settings(&[(Namespace::Upf1, 77)], obj.clone());
        assert!(matches!(preflight(1000, &s, &proc_root), Err(CliError::Privilege(_))));
        preflight(0, &s, &proc_root).unwrap();

        let s = settings(&[(Namespace::Upf1, 77), (Namespace::Upf3, 999_999)], obj.clone());
        let e = preflight(0, &s, &proc_root).unwrap_err();
        assert!(matches!(e, CliError::NamespaceNotFound { pid: 999_999, .. }));
        assert_eq!(e.exit_code(), 11);

        let s = settings(&[(Namespace::Upf1, 77)], dir.path().join("missing.o"));
        assert!(matches!(preflight(0, &s, &proc_root), Err(CliError::ProbeLoad(_))));
    }

    #[test]
    fn link_listing() {
        let out = "1: lo: <LOOPBACK,UP,LOWER_UP> mtu 65536 qdisc noqueue state UNKNOWN\\    link/loopback 00:00:00:00:00:00\n\
                   2: eth0@if31: <BROADCAST,MULTICAST,UP> mtu 1500 qdisc noqueue state UP\\    link/ether 02:42:ac:11:00:02\n\
                   7: ogstun: <POINTOPOINT,MULTICAST,NOARP,UP> mtu 1400 qdisc fq_codel state UNKNOWN\n";
        assert_eq!(parse_links(out), vec![(1, "lo".into()), (2, "eth0".into()), (7, "ogstun".into())]);
    }

    #[test]
    fn install_plan_uses_per_upf_sections() {
        let s = settings(&[(Namespace::Upf3, 5)], PathBuf::from("/opt/upf_measure.o"));
        let cmds: Vec<String> = install_commands(Namespace::Upf3, 5, &s).iter().map(|c| c.join(" ")).collect();
        assert_eq!(
            cmds,
            vec![
                "nsenter -t 5 -n tc qdisc replace dev eth0 clsact",
                "nsenter -t 5 -n tc filter replace dev eth0 ingress bpf da obj /opt/upf_measure.o sec m1_upf3",
                "nsenter -t 5 -n tc qdisc replace dev ogstun clsact",
                "nsenter -t 5 -n tc filter replace dev ogstun ingress bpf da obj /opt/upf_measure.o sec m3_upf3",
            ]
        );
        assert_eq!(detach_commands(5, &s).len(), 4);
    }
}
