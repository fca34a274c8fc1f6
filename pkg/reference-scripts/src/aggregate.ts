// Core aggregation shared by the two reference diagnosis scripts. The basic
// recipe must stay field-for-field identical to the engine's built-in
// template script on the same inputs.

import {
  DiagnosisReport,
  QualityRecord,
  Representative,
  SymptomCount,
  Taxonomy,
  TriggerPattern,
  compareStrings,
  errorCodes,
  excerptOf,
} from "./records";

const MAX_PATTERNS = 5;
const MAX_REPRESENTATIVE_LABELS = 3;
const MAX_REPRESENTATIVES_PER_LABEL = 3;

export function buildBasicReport(records: QualityRecord[], _taxonomy: Taxonomy): DiagnosisReport {
  const failures = records.filter((r) => !r.final_pass);
  const iteration = records.length > 0 ? records[0].iteration : 0;

  const labelCounts = new Map<string, number>();
  for (const record of failures) {
    const label = record.critic.symptom_label;
    if (label) labelCounts.set(label, (labelCounts.get(label) ?? 0) + 1);
  }
  const ordered = Array.from(labelCounts.entries()).sort(
    (a, b) => b[1] - a[1] || compareStrings(a[0], b[0])
  );

  const dominant: SymptomCount[] = ordered.map(([label, count]) => ({
    label,
    count,
    share: count / failures.length,
  }));

  const patternIds = new Map<string, string[]>();
  for (const record of failures) {
    for (const code of errorCodes(record)) {
      const pattern = "error_code:" + code;
      const ids = patternIds.get(pattern) ?? [];
      ids.push(record.example_id);
      patternIds.set(pattern, ids);
    }
  }
  const patterns: TriggerPattern[] = Array.from(patternIds.entries())
    .sort((a, b) => b[1].length - a[1].length || compareStrings(a[0], b[0]))
    .slice(0, MAX_PATTERNS)
    .map(([pattern, ids]) => ({ pattern, example_ids: [...ids].sort(compareStrings) }));

  const representatives: Representative[] = [];
  for (const [label] of ordered.slice(0, MAX_REPRESENTATIVE_LABELS)) {
    let taken = 0;
    for (const record of failures) {
      if (record.critic.symptom_label !== label) continue;
      representatives.push({
        example_id: record.example_id,
        label,
        excerpt: excerptOf(record),
      });
      taken += 1;
      if (taken >= MAX_REPRESENTATIVES_PER_LABEL) break;
    }
  }

  const affected: Record<string, number> = {};
  for (const [label, count] of ordered) {
    affected[label] = count / records.length;
  }

  return {
    iteration,
    dominant_symptoms: dominant,
    trigger_patterns: patterns,
    representative_examples: representatives,
    affected_surface: affected,
  };
}

export function buildPatternReport(records: QualityRecord[], taxonomy: Taxonomy): DiagnosisReport {
  // Richer variant: the basic aggregation plus deeper trigger-pattern mining
  // over error codes and the tool calls that immediately precede errors.
  const report = buildBasicReport(records, taxonomy);
  const failures = records.filter((r) => !r.final_pass);

  const extra = new Map<string, string[]>();
  const add = (pattern: string, exampleId: string) => {
    const ids = extra.get(pattern) ?? [];
    ids.push(exampleId);
    extra.set(pattern, ids);
  };
  for (const record of failures) {
    const steps = record.trace.steps ?? [];
    for (let i = 0; i < steps.length; i++) {
      if (steps[i].kind !== "error") continue;
      const code = (steps[i].payload ?? "").split(":", 1)[0].trim();
      for (let j = i - 1; j >= 0; j--) {
        if (steps[j].kind === "tool_call" && steps[j].tool_name) {
          add(`failing_tool:${steps[j].tool_name}`, record.example_id);
          if (code) add(`tool_error_pair:${steps[j].tool_name}->${code}`, record.example_id);
          break;
        }
      }
    }
  }

  const mined: TriggerPattern[] = Array.from(extra.entries())
    .sort((a, b) => b[1].length - a[1].length || compareStrings(a[0], b[0]))
    .map(([pattern, ids]) => ({
      pattern,
      example_ids: Array.from(new Set(ids)).sort(compareStrings),
    }));

  return { ...report, trigger_patterns: [...report.trigger_patterns, ...mined] };
}
