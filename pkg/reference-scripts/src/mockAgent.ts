// Subprocess mock agent speaking the adapter wire protocol:
//   argv = [blueprint_dir, example_file]; one run document on stdout.
// The blueprint must contain behavior.json mapping example id to a scripted
// {output, trace} pair; unknown ids produce an error-step trace, still exit 0
// (a failed task is data, not a protocol failure).

import fs from "node:fs";
import path from "node:path";
import { Trace } from "./records";

interface ScriptedResult {
  output: string;
  trace: Trace;
}

function errorResult(exampleId: string, message: string): ScriptedResult {
  return {
    output: "",
    trace: {
      example_id: exampleId,
      steps: [{ index: 0, kind: "error", payload: `no_fixture: ${message}` }],
      final_output: "",
    },
  };
}

function main(argv: string[]): number {
  if (argv.length !== 2) {
    process.stderr.write("usage: mockAgent <blueprint_dir> <example_file>\n");
    return 2;
  }
  const [blueprintDir, exampleFile] = argv;
  let example: { id: string };
  try {
    example = JSON.parse(fs.readFileSync(exampleFile, "utf8"));
  } catch (err) {
    process.stderr.write(`mockAgent: unreadable example file: ${err}\n`);
    return 1;
  }
  let result: ScriptedResult;
  try {
    const tablePath = path.join(blueprintDir, "behavior.json");
    const table: Record<string, ScriptedResult> = JSON.parse(
      fs.readFileSync(tablePath, "utf8")
    );
    result = table[example.id] ?? errorResult(example.id, `id ${example.id} not in table`);
  } catch (err) {
    result = errorResult(example.id, `behavior table unreadable: ${err}`);
  }
  process.stdout.write(JSON.stringify(result) + "\n");
  return 0;
}

process.exit(main(process.argv.slice(2)));
