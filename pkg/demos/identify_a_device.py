"""
Recognising a device by its layout
==================================

Enrolls twenty simulated devices, then checks that each one is recognised,
that an unknown device is not, and that ownership verification survives
changes to files outside the read-only set.
"""
from fsgenome import EnrolledSet, allocsim, identify, verify_ownership
from fsgenome.model import file_universe

cfg = allocsim.default_config()
devices = allocsim.simulate_corpus(cfg, 20, base_seed=11)
enrolled = EnrolledSet.enroll(devices, file_universe(devices))

hit = identify(devices.installations[3], enrolled)
print(f"enrolled device -> {hit.label} (similarity {hit.score.similarity:.3f})")

stranger = allocsim.simulate_installation(cfg, 99, device_label="stranger")
miss = identify(stranger, enrolled)
print(f"unknown device  -> {miss.label} (best similarity {miss.score.similarity:.3f})")

# Only the files installed first are treated as read-only.
owner = devices.installations[0]
readonly = [p for p, _ in cfg.file_plan[:300]]
edited = owner.replace(entries={**owner.entries, **{p: () for p, _ in cfg.file_plan[300:]}})
print("owner after edits:", verify_ownership(edited, owner, readonly))
print("lookalike device: ", verify_ownership(stranger, owner, readonly))
