// Seeded record-set fixture generator for conformance testing.
// Protocol: node makeFixtures.js <out_dir> [count] [seed]
// Writes fixture_<k>/records.jsonl + taxonomy.json per fixture.

import fs from "node:fs";
import path from "node:path";
import { QualityRecord, Taxonomy } from "./records";

const LABELS = [
  "tool_error",
  "empty_output",
  "missing_required_step",
  "wrong_action_order",
  "invalid_tool_arguments",
];
const ERROR_CODES = ["timeout", "tool_error", "schema_violation", "wrong_answer"];
const TOOLS = ["search", "submit", "fetch"];

// mulberry32: tiny deterministic PRNG, good enough for fixtures.
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function pick<T>(rand: () => number, items: T[]): T {
  return items[Math.floor(rand() * items.length)];
}

function randomText(rand: () => number, maxLen: number): string {
  const alphabet = "abcdefgh 0123456789:{}\"\\\n\t";
  const length = Math.floor(rand() * maxLen);
  let out = "";
  for (let i = 0; i < length; i++) out += alphabet[Math.floor(rand() * alphabet.length)];
  return out;
}

export function makeRecord(rand: () => number, exampleId: string, iteration: number): QualityRecord {
  const passing = rand() < 0.45;
  const label = passing ? "" : pick(rand, LABELS);
  const steps = [];
  const nSteps = Math.floor(rand() * 6);
  for (let i = 0; i < nSteps; i++) {
    const roll = rand();
    if (roll < 0.3) {
      steps.push({
        index: i,
        kind: "tool_call",
        payload: randomText(rand, 24),
        tool_name: pick(rand, TOOLS),
      });
    } else if (roll < 0.5 && !passing) {
      steps.push({
        index: i,
        kind: "error",
        payload: `${pick(rand, ERROR_CODES)}: ${randomText(rand, 20)}`,
      });
    } else {
      steps.push({ index: i, kind: pick(rand, ["action", "observation"]), payload: randomText(rand, 24) });
    }
  }
  const finalOutput = passing ? `answer ${randomText(rand, 10)}` : rand() < 0.5 ? "" : randomText(rand, 10);
  if (rand() < 0.6) {
    steps.push({ index: nSteps, kind: "final_output", payload: finalOutput });
  }

  const hasGrade = rand() < 0.6;
  const grade = hasGrade
    ? passing
      ? { passed: true, error_code: null, details: "" }
      : { passed: false, error_code: pick(rand, ERROR_CODES), details: randomText(rand, 12) }
    : null;
  // With a grade present the critic may disagree; failing judgments always
  // carry a symptom label.
  const criticPass = hasGrade ? rand() < 0.5 : passing;
  const symptomLabel = criticPass ? "" : label || pick(rand, LABELS);
  // final_pass follows the published rule: hard signal first, critic fallback.
  const finalPass = hasGrade ? passing : criticPass;

  return {
    example_id: exampleId,
    iteration,
    output: finalOutput,
    trace: { example_id: exampleId, steps, final_output: finalOutput },
    grade,
    critic: {
      pass: criticPass,
      symptom_label: symptomLabel,
      description: randomText(rand, 16),
    },
    final_pass: finalPass,
  };
}

export function makeFixture(seed: number, iteration: number): { records: QualityRecord[]; taxonomy: Taxonomy } {
  const rand = mulberry32(seed);
  const count = 5 + Math.floor(rand() * 36);
  const records: QualityRecord[] = [];
  for (let i = 0; i < count; i++) {
    records.push(makeRecord(rand, `e${String(i).padStart(3, "0")}`, iteration));
  }
  const labels = new Set<string>();
  for (const record of records) {
    if (record.critic.symptom_label) labels.add(record.critic.symptom_label);
  }
  const ordered = Array.from(labels).sort();
  const taxonomy: Taxonomy = {
    labels: ordered,
    first_seen: Object.fromEntries(ordered.map((l) => [l, 0])),
  };
  return { records, taxonomy };
}

function main(argv: string[]): number {
  const outDir = argv[0];
  if (!outDir) {
    process.stderr.write("usage: makeFixtures <out_dir> [count] [seed]\n");
    return 2;
  }
  const count = argv[1] ? parseInt(argv[1], 10) : 50;
  const seed = argv[2] ? parseInt(argv[2], 10) : 0;
  for (let k = 0; k < count; k++) {
    const { records, taxonomy } = makeFixture(seed * 1000 + k, k);
    const dir = path.join(outDir, `fixture_${String(k).padStart(3, "0")}`);
    fs.mkdirSync(dir, { recursive: true });
    const lines = records.map((r) => JSON.stringify(r)).join("\n");
    fs.writeFileSync(path.join(dir, "records.jsonl"), lines + "\n", "utf8");
    fs.writeFileSync(path.join(dir, "taxonomy.json"), JSON.stringify(taxonomy), "utf8");
  }
  process.stdout.write(JSON.stringify({ fixtures: count, out: outDir }) + "\n");
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
