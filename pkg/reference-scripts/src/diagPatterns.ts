// Richer reference diagnosis script: basic aggregation plus trigger-pattern
// mining over trace error codes and the tool calls preceding them.
// Protocol: node diagPatterns.js <records_file> <taxonomy_file> <output_file>

import fs from "node:fs";
import { buildPatternReport } from "./aggregate";
import { parseRecords, Taxonomy } from "./records";

function main(argv: string[]): number {
  if (argv.length !== 3) {
    process.stderr.write("usage: diagPatterns <records_file> <taxonomy_file> <output_file>\n");
    return 2;
  }
  const [recordsFile, taxonomyFile, outputFile] = argv;
  let report;
  try {
    const records = parseRecords(fs.readFileSync(recordsFile, "utf8"));
    const taxonomy: Taxonomy = JSON.parse(fs.readFileSync(taxonomyFile, "utf8"));
    report = buildPatternReport(records, taxonomy);
  } catch (err) {
    process.stderr.write(`diagPatterns: ${err}\n`);
    return 1;
  }
  fs.writeFileSync(outputFile, JSON.stringify(report), "utf8");
  return 0;
}

process.exit(main(process.argv.slice(2)));
