// Basic reference diagnosis script.
// Protocol: node diagBasic.js <records_file> <taxonomy_file> <output_file>
// Emits a report identical to the engine's built-in template on the same inputs.

import fs from "node:fs";
import { buildBasicReport } from "./aggregate";
import { parseRecords, Taxonomy } from "./records";

function main(argv: string[]): number {
  if (argv.length !== 3) {
    process.stderr.write("usage: diagBasic <records_file> <taxonomy_file> <output_file>\n");
    return 2;
  }
  const [recordsFile, taxonomyFile, outputFile] = argv;
  let report;
  try {
    const records = parseRecords(fs.readFileSync(recordsFile, "utf8"));
    const taxonomy: Taxonomy = JSON.parse(fs.readFileSync(taxonomyFile, "utf8"));
    report = buildBasicReport(records, taxonomy);
  } catch (err) {
    process.stderr.write(`diagBasic: ${err}\n`);
    return 1;
  }
  fs.writeFileSync(outputFile, JSON.stringify(report), "utf8");
  return 0;
}

process.exit(main(process.argv.slice(2)));
