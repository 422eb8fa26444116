import collections

from .adapters import ModelAdapter, MonteCarloAdapter
from .exceptions import InvalidMode

MODES = ("mc", "model", "both")


class Session:
    """Holds one sweep adapter per mode; ``both`` runs every mounted one."""

    def __init__(self, threads=None, seed=None):
        self.adapters = collections.OrderedDict()
        self.mount("mc", MonteCarloAdapter(threads=threads, seed=seed))
        self.mount("model", ModelAdapter())

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()

    def mount(self, mode, adapter):
        self.adapters[mode] = adapter

    def get_adapter(self, mode):
        """
        Returns the sweep adapter mounted for the given mode.

        :rtype: qkd_dispersion.adapters.BaseAdapter
        """
        try:
            return self.adapters[mode]
        except KeyError:
            raise InvalidMode(f"No sweep adapter is mounted for mode {mode!r}") from None

    def sweep_dcm(self, scenario_file, mode="model"):
        if mode == "both":
            adapters = list(self.adapters.values())
        else:
            adapters = [self.get_adapter(mode)]
        rows = []
        for adapter in adapters:
            rows.extend(adapter.sweep_dcm(scenario_file))
        # stable: per reading, rows keep the mount order of their adapters
        return sorted(rows, key=lambda row: row.dcm_ps_per_nm)

    def close(self):
        """Closes all adapters and as such the session"""
        for adapter in self.adapters.values():
            adapter.close()
