// Wire-format types and parsing for the line-delimited quality record files.
// These mirror the published record schema; only the wire contract is used,
// never engine internals.

export interface TraceStep {
  index: number;
  kind: string;
  payload: string;
  tool_name?: string;
}

export interface Trace {
  example_id: string;
  steps: TraceStep[];
  final_output: string;
}

export interface Grade {
  passed: boolean;
  error_code: string | null;
  details: string;
}

export interface Verdict {
  pass: boolean;
  symptom_label: string;
  description: string;
}

export interface QualityRecord {
  example_id: string;
  iteration: number;
  output: string;
  trace: Trace;
  grade: Grade | null;
  critic: Verdict;
  final_pass: boolean;
  [extra: string]: unknown;
}

export interface Taxonomy {
  labels: string[];
  first_seen: Record<string, number>;
}

export function parseRecords(text: string): QualityRecord[] {
  const records: QualityRecord[] = [];
  const seen = new Set<string>();
  const lines = text.split(/\r?\n/);
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let data: QualityRecord;
    try {
      data = JSON.parse(line);
    } catch (err) {
      throw new Error(`malformed record on line ${i + 1}: ${err}`);
    }
    if (typeof data.example_id !== "string" || typeof data.final_pass !== "boolean") {
      throw new Error(`malformed record on line ${i + 1}: missing required fields`);
    }
    if (seen.has(data.example_id)) {
      throw new Error(`duplicate example_id ${data.example_id} on line ${i + 1}`);
    }
    seen.add(data.example_id);
    records.push(data);
  }
  return records;
}

// Shared report schema emitted by diagnosis scripts.
export interface SymptomCount {
  label: string;
  count: number;
  share: number;
}

export interface TriggerPattern {
  pattern: string;
  example_ids: string[];
}

export interface Representative {
  example_id: string;
  label: string;
  excerpt: string;
}

export interface DiagnosisReport {
  iteration: number;
  dominant_symptoms: SymptomCount[];
  trigger_patterns: TriggerPattern[];
  representative_examples: Representative[];
  affected_surface: Record<string, number>;
}

export function errorCodes(record: QualityRecord): string[] {
  const codes: string[] = [];
  if (record.grade !== null && record.grade !== undefined && record.grade.error_code) {
    codes.push(record.grade.error_code);
  }
  for (const step of record.trace.steps ?? []) {
    if (step.kind === "error") {
      const code = (step.payload ?? "").split(":", 1)[0].trim();
      if (code) codes.push(code);
    }
  }
  const unique: string[] = [];
  for (const code of codes) {
    if (!unique.includes(code)) unique.push(code);
  }
  return unique;
}

export function excerptOf(record: QualityRecord, limit = 160): string {
  let lastError: string | null = null;
  for (const step of record.trace.steps ?? []) {
    if (step.kind === "error") lastError = step.payload ?? "";
  }
  let text: string;
  if (lastError) {
    text = lastError;
  } else {
    const finalOutput = record.trace.final_output ?? "";
    text = finalOutput ? finalOutput : record.output ?? "";
  }
  // Slice by code points to match the reference aggregation exactly.
  return Array.from(text).slice(0, limit).join("");
}

export function compareStrings(a: string, b: string): number {
  // Plain code-unit comparison; never locale-dependent.
  return a < b ? -1 : a > b ? 1 : 0;
}
