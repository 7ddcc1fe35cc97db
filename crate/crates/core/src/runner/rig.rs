//! Virtual appliances wired to a client and arbiter, either in process or
//! behind loopback UDP servers.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::RunError;
use crate::devices::{
    ClientConfig, CommandRecord, GuardPolicy, InProcessTransport, MiioClient, Registry, ServerHandle, Transport,
    UdpTransport, VirtualDevice,
};
use crate::intent::Arbiter;

pub struct DeviceRig {
    pub devices: BTreeMap<String, Arc<VirtualDevice>>,
    pub arbiter: Arbiter,
    /// kept alive for the rig's lifetime
    _servers: Vec<ServerHandle>,
}

fn virtual_devices(registry: &Registry) -> BTreeMap<String, Arc<VirtualDevice>> {
    registry
        .devices
        .iter()
        .map(|d| (d.name.clone(), Arc::new(VirtualDevice::new(d.clone()))))
        .collect()
}

impl DeviceRig {
    pub fn in_process(registry: &Registry, policy: GuardPolicy) -> Self {
        let devices = virtual_devices(registry);
        let mut t = InProcessTransport::new();
        for d in &registry.devices {
            t.attach(&d.address, devices[&d.name].clone());
        }
        Self::assemble(registry.clone(), devices, Arc::new(t), ClientConfig::default(), policy, Vec::new())
    }

    /// Serve every device on `127.0.0.1:0` and point the registry at the
    /// bound ports.
    pub fn loopback_udp(registry: &Registry, policy: GuardPolicy, client: ClientConfig) -> Result<Self, RunError> {
        let devices = virtual_devices(registry);
        let mut reg = registry.clone();
        let mut servers = Vec::new();
        for d in reg.devices.iter_mut() {
            let h = devices[&d.name].serve("127.0.0.1:0")?;
            d.address = h.address.clone();
            servers.push(h);
        }
        Ok(Self::assemble(reg, devices, Arc::new(UdpTransport::new()), client, policy, servers))
    }

    /// Talk to servers that are already running at the registry addresses.
    pub fn external(registry: &Registry, policy: GuardPolicy, client: ClientConfig) -> Self {
        Self::assemble(registry.clone(), BTreeMap::new(), Arc::new(UdpTransport::new()), client, policy, Vec::new())
    }

    fn assemble(
        registry: Registry,
        devices: BTreeMap<String, Arc<VirtualDevice>>,
        transport: Arc<dyn Transport>,
        client: ClientConfig,
        policy: GuardPolicy,
        servers: Vec<ServerHandle>,
    ) -> Self {
        let client = Arc::new(MiioClient::new(transport, client));
        Self {
            devices,
            arbiter: Arbiter::new(registry, client, policy),
            _servers: servers,
        }
    }

    /// Commands each local device executed, by device name.
    pub fn device_logs(&self) -> BTreeMap<String, Vec<CommandRecord>> {
        self.devices.iter().map(|(n, d)| (n.clone(), d.command_log())).collect()
    }
}
