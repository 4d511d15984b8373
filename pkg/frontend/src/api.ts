/**
 * Typed client for the annotation service.
 *
 * Every request is scoped to the session's rater id; the service only ever
 * discloses the requesting rater's own completion state, so assessments stay
 * blind between raters.
 */

export type AssessmentLabel =
  | "healthy"
  | "mild"
  | "moderate"
  | "loud_thrilling"
  | "bad_quality"
  | "other";

export const ASSESSMENT_LABELS: readonly AssessmentLabel[] = [
  "healthy",
  "mild",
  "moderate",
  "loud_thrilling",
  "bad_quality",
  "other",
];

export type PassIndex = 1 | 2;

export interface RecordingStatus {
  id: string;
  duration_s: number;
  completed_passes: PassIndex[];
}

export interface StoredAssessment {
  recording_id: string;
  rater_id: string;
  pass_index: PassIndex;
  label: AssessmentLabel;
  submitted_at: string;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class AnnotationClient {
  constructor(
    private baseUrl: string,
    private raterId: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  get rater(): string {
    return this.raterId;
  }

  async listRecordings(): Promise<RecordingStatus[]> {
    const resp = await this.fetchImpl(`${this.baseUrl}/recordings`, {
      headers: { "X-Rater-Id": this.raterId },
    });
    if (!resp.ok) {
      throw new ApiError(resp.status, `listing recordings failed (${resp.status})`);
    }
    return (await resp.json()) as RecordingStatus[];
  }

  audioUrl(recordingId: string): string {
    return `${this.baseUrl}/recordings/${encodeURIComponent(recordingId)}/audio`;
  }

  async submitAssessment(
    recordingId: string,
    passIndex: PassIndex,
    label: AssessmentLabel,
  ): Promise<StoredAssessment> {
    const resp = await this.fetchImpl(`${this.baseUrl}/assessments`, {
      method: "POST",
      headers: { "Content-Type": "application/json", "X-Rater-Id": this.raterId },
      body: JSON.stringify({
        recording_id: recordingId,
        rater_id: this.raterId,
        pass_index: passIndex,
        label,
      }),
    });
    if (!resp.ok) {
      throw new ApiError(resp.status, `assessment rejected (${resp.status})`);
    }
    return (await resp.json()) as StoredAssessment;
  }
}
