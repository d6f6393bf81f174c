// Typed client for the study service JSON API.

export interface Progress {
  rated: number;
  batch_size: number;
}

export interface VideoItem {
  status: "item";
  video_id: string;
  media_url: string;
  batch_id: number;
  progress: Progress;
}

export interface Blocked {
  status: "blocked";
  reason: string; // "fatigue_limit" | "rejected"
}

export interface BatchComplete {
  status: "batch_complete";
  study_complete: boolean;
  completed_batches?: number;
}

export type NextItem = VideoItem | Blocked | BatchComplete;

export interface TrainingItem {
  video_id: string;
  media_url: string;
  level: string;
  criteria: string;
}

export interface SubjectProfile {
  subject_id: string;
  status: string;
  completed_batches: Array<[number, string]>;
  outlier_ratio: number | null;
}

export interface TestVideoRef {
  video_id: string;
  media_url: string;
}

export interface SessionView {
  profile: SubjectProfile;
  phase: "training" | "testing" | "formal" | "done";
  batch_id: number | null;
  cursor: number | null;
  test_attempts: number;
  test_videos?: TestVideoRef[];
}

export interface TestResult {
  result: "qualified" | "failed";
  detail: {
    n_within: number;
    threshold: number;
    attempts_used: number;
    attempts_left: number;
    exhausted: boolean;
  };
}

export interface RatingAck {
  accepted: boolean;
  duplicate: boolean;
  video_id: string;
  batch_id?: number;
  progress?: Progress;
  batch_complete?: boolean;
}

// playback_completed is typed `true`: a request body with false is
// unrepresentable, and submitRating() additionally checks at runtime.
export interface RatingSubmission {
  subject_id: string;
  video_id: string;
  raw_score: number;
  replays: number;
  playback_completed: true;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  try {
    const body = await response.json();
    return new ApiError(response.status, body.error ?? "error", body.message ?? response.statusText);
  } catch {
    return new ApiError(response.status, "error", response.statusText);
  }
}

export class StudyApi {
  constructor(
    private baseUrl: string,
    public readonly studyId: string,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  registerSubject(subjectId: string): Promise<SubjectProfile> {
    return this.request(`/studies/${this.studyId}/subjects`, {
      method: "POST",
      body: JSON.stringify({ subject_id: subjectId }),
    });
  }

  async trainingMaterials(): Promise<TrainingItem[]> {
    const body = await this.request<{ items: TrainingItem[] }>(
      `/studies/${this.studyId}/training`,
    );
    return body.items;
  }

  acknowledgeTraining(subjectId: string): Promise<SubjectProfile> {
    return this.request(
      `/studies/${this.studyId}/subjects/${subjectId}/training`,
      { method: "POST" },
    );
  }

  submitTest(
    subjectId: string,
    ratings: Array<{ video_id: string; raw_score: number }>,
  ): Promise<TestResult> {
    return this.request(`/studies/${this.studyId}/subjects/${subjectId}/test`, {
      method: "POST",
      body: JSON.stringify({ ratings }),
    });
  }

  sessionView(subjectId: string): Promise<SessionView> {
    return this.request(`/studies/${this.studyId}/subjects/${subjectId}`);
  }

  nextItem(subjectId: string): Promise<NextItem> {
    return this.request(`/studies/${this.studyId}/subjects/${subjectId}/next`);
  }

  submitRating(submission: RatingSubmission): Promise<RatingAck> {
    if (submission.playback_completed !== true) {
      throw new Error("rating submitted before playback completed");
    }
    return this.request(`/studies/${this.studyId}/ratings`, {
      method: "POST",
      body: JSON.stringify(submission),
    });
  }
}
