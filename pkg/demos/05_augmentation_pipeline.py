"""The synthesis-pairing pipeline end to end with stub tools: plan
intra-class (voice, transcript) pairs, "synthesize" them with a command that
copies the voice donor's audio, re-transcribe with a stub recognizer, clean
the text, and merge real + synthetic into one cohort.
"""

import sys
import tempfile
import wave
from pathlib import Path

import numpy as np

from motas.augmentation_planner import (
    CohortItem,
    ExternalToolConfig,
    merge_augmented,
    plan_pairs,
    run_asr_jobs,
    run_tts_jobs,
)

workdir = Path(tempfile.mkdtemp(prefix="motas-demo-"))
PY = sys.executable

# A tiny real cohort: 5 AD and 4 CN recordings.
cohort = []
for label, count in (("AD", 5), ("CN", 4)):
    for i in range(count):
        path = workdir / f"{label.lower()}{i}.wav"
        with wave.open(str(path), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(16000)
            w.writeframes((np.full(1600, 0.01 * (i + 1)) * 32767).astype("<i2").tobytes())
        cohort.append(CohortItem(id=f"{label.lower()}{i}", label=label, audio=str(path),
                                 transcript=f"sample text from {label} speaker {i}"))

plan = plan_pairs(cohort, factor=2.0, seed=42)
print(f"plan for 2.0x augmentation: {len(plan.records)} jobs")
for rec in plan.records[:4]:
    print(f"  {rec.synth_id}: voice={rec.voice_id} transcript={rec.transcript_id}")
print("  ...")

# Stub synthesis: copy the voice donor's audio (a real run would call a
# speaker-preserving synthesis tool here).
tts = (f'{PY} -c "import shutil,sys; shutil.copy(sys.argv[1], sys.argv[3])" '
       "{voice_audio} {text} {out}")
# Stub recognition: emit noisy text that the cleaner must normalize.
asr = (f'{PY} -c "import sys,pathlib; pathlib.Path(sys.argv[1]).write_text'
       "('Well... THE boy, he\\'s on a stool!')\" {out} {audio}")
cfg = ExternalToolConfig(tts_command_template=tts, asr_command_template=asr,
                         timeout_s=30.0, max_retries=1)

synthetic, tts_failures = run_tts_jobs(plan, cohort, cfg, workdir / "synth")
print(f"\nsynthesis: {len(synthetic)} items, {len(tts_failures)} failures")

transcribed, asr_failures = run_asr_jobs(synthetic, cfg, workdir / "asr")
print(f"recognition: {len(transcribed)} items, {len(asr_failures)} invalid/failed")
print(f"  cleaned transcript: {Path(transcribed[0].transcript).read_text()!r}")

merged = merge_augmented(cohort, transcribed)
print(f"\nmerged cohort: {merged.summary['total']} items")
for label, row in merged.summary["per_class"].items():
    print(f"  {label}: {row['real']} real + {row['synthetic']} synthetic "
          f"(ratio {row['synthetic_per_real']:.2f})")
print(f"\nscratch files in {workdir}")
